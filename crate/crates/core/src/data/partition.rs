use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TimeSeriesDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionPolicy {
    /// Whole sequences dealt round-robin.
    #[default]
    BySequence,
    /// Every sequence cut into one contiguous chunk per client; the last
    /// chunk takes the remainder.
    ContiguousChunks,
}

/// Training data held by one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: u32,
    pub sequences: Vec<DMatrix<f64>>,
}

impl ClientDataset {
    pub fn timesteps(&self) -> usize {
        self.sequences.iter().map(|s| s.ncols()).sum()
    }
}

pub fn partition(dataset: &TimeSeriesDataset, n_clients: usize, policy: PartitionPolicy) -> Result<Vec<ClientDataset>> {
    if n_clients == 0 {
        return Err(Error::InvalidParameter("n_clients must be positive".into()));
    }
    let mut clients: Vec<ClientDataset> = (0..n_clients)
        .map(|c| ClientDataset {
            client_id: c as u32,
            sequences: Vec::new(),
        })
        .collect();
    match policy {
        PartitionPolicy::BySequence => {
            if n_clients > dataset.train.len() {
                return Err(Error::InvalidParameter(format!(
                    "{n_clients} clients but only {} training sequences",
                    dataset.train.len()
                )));
            }
            for (i, s) in dataset.train.iter().enumerate() {
                clients[i % n_clients].sequences.push(s.clone());
            }
        }
        PartitionPolicy::ContiguousChunks => {
            for s in &dataset.train {
                let len = s.ncols();
                if len < n_clients {
                    return Err(Error::InvalidParameter(format!(
                        "sequence of {len} steps cannot be split across {n_clients} clients"
                    )));
                }
                let chunk = len / n_clients;
                for (c, client) in clients.iter_mut().enumerate() {
                    let start = c * chunk;
                    let width = if c + 1 == n_clients { len - start } else { chunk };
                    client.sequences.push(s.columns(start, width).into_owned());
                }
            }
        }
    }
    Ok(clients)
}
