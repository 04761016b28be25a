mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use resfed_core::mdrs::{fit_precision, frobenius_relative, PrecisionPath};
use resfed_core::{batch_precision, CovarianceAccumulator, PrecisionModel};

use common::{random_matrix, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn online_matches_batch(d in 1usize..24, t in 1usize..400, seed in any::<u64>()) {
        let states = random_matrix(&mut rng(seed), d, t, -1.0, 1.0);
        let online = fit_precision(&[states.clone()], d, 1e-2, PrecisionPath::Online).unwrap();
        let batch = fit_precision(&[states], d, 1e-2, PrecisionPath::Batch).unwrap();
        prop_assert!(frobenius_relative(online.matrix(), batch.matrix()) <= 1e-8);
    }

    #[test]
    fn scores_are_non_negative(d in 1usize..16, t in 1usize..200, seed in any::<u64>()) {
        let mut r = rng(seed);
        let train = random_matrix(&mut r, d, t, -1.0, 1.0);
        let mut acc = CovarianceAccumulator::new(d);
        acc.accumulate(&train).unwrap();
        let model = batch_precision(&acc, 1e-4).unwrap();
        let probe = random_matrix(&mut r, d, 50, -3.0, 3.0);
        prop_assert!(model.score(&probe).unwrap().as_slice().iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn accumulation_order_is_irrelevant(d in 1usize..16, seed in any::<u64>()) {
        let mut r = rng(seed);
        let blocks: Vec<DMatrix<f64>> = (0..5).map(|_| random_matrix(&mut r, d, 40, -1.0, 1.0)).collect();
        let phi = |order: &[usize]| {
            let mut acc = CovarianceAccumulator::new(d);
            for &i in order {
                acc.accumulate(&blocks[i]).unwrap();
            }
            acc.into_phi()
        };
        let a = phi(&[0, 1, 2, 3, 4]);
        let b = phi(&[3, 1, 4, 0, 2]);
        prop_assert!(frobenius_relative(&b, &a) <= 1e-13);
    }

    #[test]
    fn more_data_never_raises_a_score(d in 1usize..12, seed in any::<u64>()) {
        // P shrinks in the Loewner order with every rank-one update.
        let mut r = rng(seed);
        let probe = DVector::from_iterator(d, (0..d).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)));
        let mut model = PrecisionModel::initial(d, 1e-1).unwrap();
        let mut last = probe.dot(&(model.matrix() * &probe));
        for _ in 0..30 {
            let x = DVector::from_iterator(d, (0..d).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)));
            model.online_update(&x).unwrap();
            let now = probe.dot(&(model.matrix() * &probe));
            prop_assert!(now <= last * (1.0 + 1e-12));
            last = now;
        }
    }
}

#[test]
fn online_matches_batch_at_full_scale() {
    let (d, t) = (64, 10_000);
    let states = random_matrix(&mut rng(7), d, t, -1.0, 1.0);
    let online = fit_precision(&[states.clone()], d, 1e-4, PrecisionPath::Online).unwrap();
    let batch = fit_precision(&[states], d, 1e-4, PrecisionPath::Batch).unwrap();
    assert!(frobenius_relative(online.matrix(), batch.matrix()) <= 1e-8);
}

#[test]
fn training_points_score_lower_than_far_points() {
    let mut r = rng(3);
    let train = random_matrix(&mut r, 4, 500, -0.1, 0.1);
    let mut acc = CovarianceAccumulator::new(4);
    acc.accumulate(&train).unwrap();
    let model = batch_precision(&acc, 1e-4).unwrap();
    let near = model.score(&train.columns(0, 1).into_owned()).unwrap().0[0];
    let far = model.score(&DMatrix::from_element(4, 1, 1.0)).unwrap().0[0];
    assert!(far > 10.0 * near);
}
