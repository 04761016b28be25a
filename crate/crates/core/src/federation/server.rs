//! Server-side aggregation. Only ever sees [`ClientUpdateMessage`]s.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::message::{ClientUpdateMessage, GlobalKind, GlobalModelMessage, PayloadKind};
use crate::error::{Error, ProtocolError, Result};
use crate::mdrs::{batch_precision, CovarianceAccumulator};
use crate::readout::{aggregate_and_solve, BetaPlacement, ReadoutSufficientStats};

/// What to do when expected clients have not reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationPolicy {
    #[default]
    Strict,
    AllowPartial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationSummary {
    pub round: u32,
    pub reporting: Vec<u32>,
    pub missing: Vec<u32>,
    pub payload_bytes: u64,
}

/// Groups one round's messages per client, checking round, kinds and
/// duplicates. Keys are ascending client ids.
fn collect_round<'a>(
    messages: &'a [ClientUpdateMessage],
    kinds: &[PayloadKind],
) -> Result<(u32, BTreeMap<u32, BTreeMap<PayloadKind, &'a ClientUpdateMessage>>)> {
    let round = messages.first().ok_or(ProtocolError::NoMessages)?.round;
    let mut by_client: BTreeMap<u32, BTreeMap<PayloadKind, &ClientUpdateMessage>> = BTreeMap::new();
    for m in messages {
        if m.round != round {
            return Err(ProtocolError::RoundMismatch {
                expected: round,
                found: m.round,
            }
            .into());
        }
        if !kinds.contains(&m.kind) {
            return Err(ProtocolError::KindMismatch {
                expected: kinds[0].role().name(),
                found: m.kind.role().name(),
            }
            .into());
        }
        if by_client.entry(m.client_id).or_default().insert(m.kind, m).is_some() {
            return Err(ProtocolError::DuplicateClient(m.client_id).into());
        }
    }
    for parts in by_client.values() {
        if let Some(kind) = kinds.iter().find(|k| !parts.contains_key(k)) {
            return Err(ProtocolError::KindMismatch {
                expected: kind.role().name(),
                found: "nothing",
            }
            .into());
        }
    }
    Ok((round, by_client))
}

/// `P_g = (Σ_c Φ_c + δI)⁻¹` with the sum taken in ascending client id.
pub fn server_aggregate(messages: &[ClientUpdateMessage], delta: f64) -> Result<GlobalModelMessage> {
    let phi = global_covariance(messages)?;
    let precision = batch_precision(&CovarianceAccumulator::from_parts(phi, 0)?, delta)?;
    GlobalModelMessage::new(messages[0].round, GlobalKind::MdrsPrecision, precision.matrix())
}

/// `W_out = (Σ A_c)(Σ B_c [+ βI])⁻¹` with sums in ascending client id.
pub fn server_aggregate_readout(
    messages: &[ClientUpdateMessage],
    beta: f64,
    placement: BetaPlacement,
) -> Result<GlobalModelMessage> {
    let (round, by_client) = collect_round(messages, &[PayloadKind::EsnA, PayloadKind::EsnB])?;
    let stats = by_client
        .iter()
        .map(|(&id, parts)| {
            Ok((
                id,
                ReadoutSufficientStats {
                    a: parts[&PayloadKind::EsnA].decode_matrix()?,
                    b: parts[&PayloadKind::EsnB].decode_matrix()?,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = aggregate_and_solve(&stats, beta, placement)?;
    GlobalModelMessage::new(round, GlobalKind::EsnWout, &model.w_out)
}

/// Which global model the server builds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServerModel {
    Mdrs { delta: f64 },
    Readout { beta: f64, placement: BetaPlacement },
}

/// A round-based aggregator with a fixed roster of expected clients.
#[derive(Debug, Clone)]
pub struct Server {
    roster: Vec<u32>,
    policy: AggregationPolicy,
    model: ServerModel,
}

impl Server {
    pub fn new(mut roster: Vec<u32>, policy: AggregationPolicy, model: ServerModel) -> Self {
        roster.sort_unstable();
        roster.dedup();
        Self { roster, policy, model }
    }

    pub fn aggregate(&self, round: u32, messages: &[ClientUpdateMessage]) -> Result<(GlobalModelMessage, AggregationSummary)> {
        if let Some(m) = messages.iter().find(|m| m.round != round) {
            return Err(ProtocolError::RoundMismatch {
                expected: round,
                found: m.round,
            }
            .into());
        }
        let mut reporting: Vec<u32> = messages.iter().map(|m| m.client_id).collect();
        reporting.sort_unstable();
        reporting.dedup();
        if let Some(&stranger) = reporting.iter().find(|id| self.roster.binary_search(id).is_err()) {
            return Err(ProtocolError::UnknownClient(stranger).into());
        }
        let missing: Vec<u32> = self
            .roster
            .iter()
            .copied()
            .filter(|id| reporting.binary_search(id).is_err())
            .collect();
        if !missing.is_empty() {
            match self.policy {
                AggregationPolicy::Strict => return Err(ProtocolError::MissingClients(missing).into()),
                AggregationPolicy::AllowPartial => {
                    log::warn!("round {round}: aggregating without clients {missing:?}");
                }
            }
        }
        let global = match self.model {
            ServerModel::Mdrs { delta } => server_aggregate(messages, delta)?,
            ServerModel::Readout { beta, placement } => server_aggregate_readout(messages, beta, placement)?,
        };
        let payload_bytes = messages.iter().map(|m| m.payload_bytes() as u64).sum();
        Ok((
            global,
            AggregationSummary {
                round,
                reporting,
                missing,
                payload_bytes,
            },
        ))
    }
}

/// `Φ_g = Σ_c Φ_c` in ascending client id.
pub fn global_covariance(messages: &[ClientUpdateMessage]) -> Result<DMatrix<f64>> {
    let (_, by_client) = collect_round(messages, &[PayloadKind::MdrsCov])?;
    let mut total: Option<DMatrix<f64>> = None;
    for parts in by_client.values() {
        let phi = parts[&PayloadKind::MdrsCov].decode_matrix()?;
        match &mut total {
            None => total = Some(phi),
            Some(t) if t.shape() == phi.shape() => *t += phi,
            Some(t) => return Err(Error::dims("client covariance", t.nrows(), phi.nrows())),
        }
    }
    total.ok_or_else(|| ProtocolError::NoMessages.into())
}
