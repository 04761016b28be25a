use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TimeSeriesDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMethod {
    /// Map the training range of each channel to [0, 1].
    #[default]
    Minmax,
    /// Subtract the training mean and divide by the training (population)
    /// standard deviation.
    Zscore,
}

/// Affine map `x ↦ (x - offset) / scale` for one channel. Channels without
/// spread keep `offset = 0, scale = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub offset: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub method: NormalizationMethod,
    pub channels: Vec<ChannelStats>,
}

impl Normalization {
    /// Fits per-channel statistics on training sequences only.
    pub fn fit(train: &[DMatrix<f64>], method: NormalizationMethod) -> Result<Self> {
        let n = train.first().ok_or(Error::Empty("no training sequences"))?.nrows();
        let total: usize = train.iter().map(|s| s.ncols()).sum();
        if total == 0 {
            return Err(Error::Empty("training sequences have no timesteps"));
        }
        let mut channels = Vec::with_capacity(n);
        for c in 0..n {
            let values = || train.iter().flat_map(move |s| s.row(c).iter().copied().collect::<Vec<_>>());
            let (offset, spread) = match method {
                NormalizationMethod::Minmax => {
                    let (lo, hi) = values().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                    (lo, hi - lo)
                }
                NormalizationMethod::Zscore => {
                    let mean = values().sum::<f64>() / total as f64;
                    let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / total as f64;
                    (mean, var.sqrt())
                }
            };
            if spread > 0.0 && spread.is_finite() {
                channels.push(ChannelStats { offset, scale: spread });
            } else {
                log::warn!("channel {c} has no spread in training data; left unnormalized");
                channels.push(ChannelStats { offset: 0.0, scale: 1.0 });
            }
        }
        Ok(Self { method, channels })
    }

    pub fn apply(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.nrows() != self.channels.len() {
            return Err(Error::dims("normalization channels", self.channels.len(), data.nrows()));
        }
        let mut out = data.clone();
        for (c, stats) in self.channels.iter().enumerate() {
            out.row_mut(c).apply(|v| *v = (*v - stats.offset) / stats.scale);
        }
        Ok(out)
    }
}

/// Fits on the training split and transforms both splits.
pub fn normalize(dataset: &TimeSeriesDataset, method: NormalizationMethod) -> Result<TimeSeriesDataset> {
    dataset.check()?;
    let norm = Normalization::fit(&dataset.train, method)?;
    let train = dataset.train.iter().map(|s| norm.apply(s)).collect::<Result<_>>()?;
    let test = dataset
        .test
        .iter()
        .map(|s| {
            Ok(super::LabeledSeries {
                id: s.id.clone(),
                data: norm.apply(&s.data)?,
                labels: s.labels.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(TimeSeriesDataset {
        channels: dataset.channels.clone(),
        train,
        test,
        normalization: Some(norm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledSeries;

    fn dataset(train: Vec<DMatrix<f64>>, test: DMatrix<f64>) -> TimeSeriesDataset {
        let n = train[0].nrows();
        TimeSeriesDataset {
            channels: (0..n).map(|c| format!("c{c}")).collect(),
            train,
            test: vec![LabeledSeries {
                id: "t".into(),
                labels: vec![false; test.ncols()],
                data: test,
            }],
            normalization: None,
        }
    }

    #[test]
    fn minmax_uses_training_range() {
        let ds = dataset(
            vec![DMatrix::from_row_slice(1, 3, &[0.0, 10.0, 4.0])],
            DMatrix::from_row_slice(1, 2, &[5.0, 20.0]),
        );
        let n = normalize(&ds, NormalizationMethod::Minmax).unwrap();
        assert_eq!(n.test[0].data[(0, 0)], 0.5);
        assert_eq!(n.test[0].data[(0, 1)], 2.0);
        assert_eq!(n.train[0][(0, 1)], 1.0);
    }

    #[test]
    fn constant_channel_passes_through() {
        let ds = dataset(
            vec![DMatrix::from_row_slice(2, 3, &[3.0, 3.0, 3.0, 1.0, 2.0, 3.0])],
            DMatrix::from_row_slice(2, 1, &[7.0, 2.0]),
        );
        for method in [NormalizationMethod::Minmax, NormalizationMethod::Zscore] {
            let n = normalize(&ds, method).unwrap();
            assert_eq!(n.train[0].row(0), ds.train[0].row(0));
            assert_eq!(n.test[0].data[(0, 0)], 7.0);
        }
    }

    #[test]
    fn zscore_matches_per_channel_arithmetic() {
        let a = DMatrix::from_fn(2, 7, |i, j| ((i + 1) * (j * j + 3)) as f64 * 0.37 - 1.0);
        let b = DMatrix::from_fn(2, 4, |i, j| (i as f64 - j as f64).sin() * 5.0);
        let ds = dataset(vec![a.clone(), b.clone()], b.clone());
        let n = normalize(&ds, NormalizationMethod::Zscore).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = a.row(c).iter().chain(b.row(c).iter()).copied().collect();
            let mean = vals.iter().sum::<f64>() / 11.0;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 11.0).sqrt();
            for j in 0..4 {
                assert!((n.test[0].data[(c, j)] - (b[(c, j)] - mean) / sd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn idempotent_on_normalized_data() {
        let a = DMatrix::from_fn(3, 20, |i, j| ((i * 7 + j * 3) % 11) as f64 * 1.3 - 2.0);
        let ds = dataset(vec![a.clone()], a);
        for method in [NormalizationMethod::Minmax, NormalizationMethod::Zscore] {
            let once = normalize(&ds, method).unwrap();
            let twice = normalize(&once, method).unwrap();
            assert!((&once.train[0] - &twice.train[0]).amax() < 1e-12);
        }
    }
}
