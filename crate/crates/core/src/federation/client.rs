use std::sync::Arc;

use nalgebra::DMatrix;

use super::message::{ClientUpdateMessage, PayloadKind};
use crate::error::{ProtocolError, Result};
use crate::mdrs::CovarianceAccumulator;
use crate::pipeline::{readout_stats, Method};
use crate::readout::{BetaPlacement, ReadoutSufficientStats};
use crate::reservoir::{Reservoir, ReservoirSpec};

#[derive(Debug, Clone)]
enum LocalModel {
    Covariance(CovarianceAccumulator),
    Readout(ReadoutSufficientStats),
}

/// Ridge settings a client needs when it regularizes its own `B_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientRidge {
    pub beta: f64,
    pub placement: BetaPlacement,
}

/// One federation participant. Raw data and states never leave it; only
/// [`ClientUpdateMessage`]s do.
#[derive(Debug, Clone)]
pub struct Client {
    id: u32,
    reservoir: Arc<Reservoir>,
    local: LocalModel,
    ridge: ClientRidge,
}

impl Client {
    pub fn new(id: u32, reservoir: Arc<Reservoir>, method: Method, ridge: ClientRidge) -> Self {
        let spec = reservoir.spec();
        let local = match method {
            Method::Mdrs => LocalModel::Covariance(CovarianceAccumulator::new(spec.feature_dim())),
            Method::EsnSre => LocalModel::Readout(ReadoutSufficientStats::zeros(spec.n_reservoir, spec.n_input)),
        };
        Self {
            id,
            reservoir,
            local,
            ridge,
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    /// Timesteps accumulated so far (MD-RS only).
    pub fn count(&self) -> Option<u64> {
        match &self.local {
            LocalModel::Covariance(acc) => Some(acc.count()),
            LocalModel::Readout(_) => None,
        }
    }

    /// Folds `sequences` into the local model and emits the cumulative local
    /// model for `round`. Each sequence starts from the zero state.
    pub fn round(
        &mut self,
        run_spec: &ReservoirSpec,
        round: u32,
        sequences: &[DMatrix<f64>],
    ) -> Result<Vec<ClientUpdateMessage>> {
        if run_spec != self.reservoir.spec() {
            return Err(ProtocolError::SpecMismatch(self.id).into());
        }
        match &mut self.local {
            LocalModel::Covariance(acc) => {
                for inputs in sequences {
                    acc.accumulate(&self.reservoir.training_features(inputs)?)?;
                }
                Ok(vec![ClientUpdateMessage::new(
                    self.id,
                    round,
                    PayloadKind::MdrsCov,
                    acc.phi(),
                    Some(acc.count()),
                )?])
            }
            LocalModel::Readout(stats) => {
                stats.add(&readout_stats(&self.reservoir, sequences)?)?;
                let outgoing = match self.ridge.placement {
                    BetaPlacement::Server => stats.clone(),
                    BetaPlacement::PerClient => stats.clone().regularized(self.ridge.beta),
                };
                Ok(vec![
                    ClientUpdateMessage::new(self.id, round, PayloadKind::EsnA, &outgoing.a, None)?,
                    ClientUpdateMessage::new(self.id, round, PayloadKind::EsnB, &outgoing.b, None)?,
                ])
            }
        }
    }
}
