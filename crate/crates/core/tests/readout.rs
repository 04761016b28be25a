mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use resfed_core::readout::{aggregate_and_solve, client_stats, fit_ridge, sre_score, BetaPlacement};

use common::{random_matrix, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_statistics_solve_to_pooled_ridge(
        n in 2usize..20,
        m in 1usize..4,
        cuts in prop::collection::vec(1usize..60, 1..7),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let total: usize = cuts.iter().sum();
        let x = random_matrix(&mut r, n, total, -1.0, 1.0);
        let d = random_matrix(&mut r, m, total, -1.0, 1.0);
        let mut parts = Vec::new();
        let mut at = 0;
        for (c, &len) in cuts.iter().enumerate() {
            let stats = client_stats(&x.columns(at, len).into_owned(), &d.columns(at, len).into_owned()).unwrap();
            parts.push((c as u32, stats));
            at += len;
        }
        let fed = aggregate_and_solve(&parts, 1e-3, BetaPlacement::Server).unwrap();
        let pooled = fit_ridge(&x, &d, 1e-3).unwrap();
        prop_assert!((&fed.w_out - &pooled.w_out).norm() / pooled.w_out.norm() <= 1e-10);
    }

    #[test]
    fn stronger_ridge_shrinks_the_readout(n in 2usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, n, 80, -1.0, 1.0);
        let d = random_matrix(&mut r, 2, 80, -1.0, 1.0);
        let mut last = f64::INFINITY;
        for beta in [1e-6, 1e-3, 1e-1, 1.0, 10.0] {
            let norm = fit_ridge(&x, &d, beta).unwrap().w_out.norm();
            prop_assert!(norm <= last * (1.0 + 1e-12));
            last = norm;
        }
    }

    #[test]
    fn sre_is_non_negative(n in 1usize..10, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_matrix(&mut r, n, 40, -1.0, 1.0);
        let d = random_matrix(&mut r, 3, 40, -1.0, 1.0);
        let model = fit_ridge(&x, &d, 1e-2).unwrap();
        prop_assert!(sre_score(&model, &x, &d).unwrap().as_slice().iter().all(|&s| s >= 0.0));
    }
}

#[test]
fn exact_fit_has_zero_reconstruction_error() {
    let x = random_matrix(&mut rng(1), 5, 200, -1.0, 1.0);
    let w = random_matrix(&mut rng(2), 2, 5, -1.0, 1.0);
    let d: DMatrix<f64> = &w * &x;
    let model = fit_ridge(&x, &d, 1e-12).unwrap();
    assert!((&model.w_out - &w).amax() < 1e-9);
    assert!(sre_score(&model, &x, &d).unwrap().as_slice().iter().all(|&s| s < 1e-16));
}
