//! Datasets: CSV ingestion, normalization, client partitioning and a
//! synthetic benchmark generator.

mod loader;
mod normalize;
mod partition;
mod synthetic;

use nalgebra::DMatrix;

pub use loader::{load_csv, ChannelRef, CsvSchema, TestFile};
pub use normalize::{normalize, ChannelStats, Normalization, NormalizationMethod};
pub use partition::{partition, ClientDataset, PartitionPolicy};
pub use synthetic::{generate_synthetic, inject, Anomaly, AnomalyKind, AnomalySpec, SyntheticSpec};

/// A test sequence with per-timestep anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub id: String,
    /// Channels × timesteps.
    pub data: DMatrix<f64>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub channels: Vec<String>,
    /// Normal training sequences, channels × timesteps each.
    pub train: Vec<DMatrix<f64>>,
    pub test: Vec<LabeledSeries>,
    /// Set once [`normalize`] has been applied.
    pub normalization: Option<Normalization>,
}

impl TimeSeriesDataset {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn train_timesteps(&self) -> usize {
        self.train.iter().map(|s| s.ncols()).sum()
    }

    pub(crate) fn check(&self) -> crate::Result<()> {
        let n = self.n_channels();
        for s in &self.train {
            if s.nrows() != n {
                return Err(crate::Error::dims("training channels", n, s.nrows()));
            }
        }
        for s in &self.test {
            if s.data.nrows() != n {
                return Err(crate::Error::dims("test channels", n, s.data.nrows()));
            }
            if s.labels.len() != s.data.ncols() {
                return Err(crate::Error::dims("test labels", s.data.ncols(), s.labels.len()));
            }
        }
        Ok(())
    }
}
