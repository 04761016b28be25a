//! Deterministic in-process federation driver.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{Client, ClientRidge};
use super::exchange::MessageDirectory;
use super::message::{ClientUpdateMessage, GlobalKind, GlobalModelMessage};
use super::server::{AggregationPolicy, Server, ServerModel};
use crate::data::{ClientDataset, LabeledSeries};
use crate::error::{Error, Result};
use crate::mdrs::{PrecisionModel, ScoreSeries};
use crate::pipeline::{evaluate, Evaluation, Method, ScoringInput, TrainedModel};
use crate::readout::{BetaPlacement, ReadoutModel};
use crate::reservoir::{Reservoir, ReservoirSpec};

/// How client messages reach the server.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Exchange {
    /// Encoded frames handed over in memory.
    #[default]
    InProcess,
    /// Frames written to and scanned from a directory.
    Directory(PathBuf),
}

#[derive(Debug, Clone)]
pub struct FederationRun {
    pub spec: ReservoirSpec,
    pub method: Method,
    pub clients: Vec<ClientDataset>,
    pub test: Vec<LabeledSeries>,
    pub delta: f64,
    pub beta: f64,
    pub beta_placement: BetaPlacement,
    /// Each client's sequences are fed in this many contiguous batches, one
    /// per round.
    pub rounds: u32,
    pub policy: AggregationPolicy,
    /// Clients that train but never deliver, to exercise the missing-client
    /// policy.
    pub silent_clients: Vec<u32>,
    pub exchange: Exchange,
}

impl FederationRun {
    pub fn new(spec: ReservoirSpec, method: Method, clients: Vec<ClientDataset>, test: Vec<LabeledSeries>) -> Self {
        Self {
            spec,
            method,
            clients,
            test,
            delta: crate::mdrs::DEFAULT_DELTA,
            beta: crate::pipeline::DEFAULT_BETA,
            beta_placement: BetaPlacement::Server,
            rounds: 1,
            policy: AggregationPolicy::Strict,
            silent_clients: Vec::new(),
            exchange: Exchange::InProcess,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientPayload {
    pub client_id: u32,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u32,
    pub reporting: Vec<u32>,
    pub missing: Vec<u32>,
    pub payload_bytes: Vec<ClientPayload>,
    pub total_payload_bytes: u64,
    pub client_seconds: f64,
    pub server_seconds: f64,
    pub mean_auc_roc: Option<f64>,
    pub mean_auc_pr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub n_clients: usize,
    pub feature_dim: usize,
    pub rounds: Vec<RoundLog>,
    pub evaluation: Evaluation,
    pub elapsed_seconds: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub report: RunReport,
    pub global: GlobalModelMessage,
    pub model: TrainedModel,
    pub reservoir: Arc<Reservoir>,
    /// Every client message of every round, in delivery order.
    pub messages: Vec<ClientUpdateMessage>,
    /// Final scores of each test series.
    pub scores: Vec<ScoreSeries>,
}

/// Rebuilds a usable model from the server's broadcast.
pub fn model_from_global(msg: &GlobalModelMessage, delta: f64, beta: f64) -> Result<TrainedModel> {
    let matrix = msg.decode_matrix()?;
    Ok(match msg.kind {
        GlobalKind::MdrsPrecision => TrainedModel::Precision(PrecisionModel::from_parts(matrix, delta)?),
        GlobalKind::EsnWout => TrainedModel::Readout(ReadoutModel { w_out: matrix, beta }),
    })
}

fn round_batch<T>(items: &[T], round: u32, rounds: u32) -> &[T] {
    let (r, n) = (round as usize, rounds as usize);
    &items[r * items.len() / n..(r + 1) * items.len() / n]
}

pub fn simulate(run: &FederationRun) -> Result<SimulationOutcome> {
    let started = Instant::now();
    run.spec.validate()?;
    if run.rounds == 0 {
        return Err(Error::InvalidParameter("rounds must be at least 1".into()));
    }
    if run.clients.is_empty() {
        return Err(Error::Empty("federation run has no clients"));
    }
    let mut ids: Vec<u32> = run.clients.iter().map(|c| c.client_id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(crate::error::ProtocolError::DuplicateClient(w[0]).into());
    }

    let reservoir = Arc::new(Reservoir::new(run.spec.clone())?);
    let ridge = ClientRidge {
        beta: run.beta,
        placement: run.beta_placement,
    };
    let mut clients: Vec<Client> = run
        .clients
        .iter()
        .map(|c| Client::new(c.client_id, Arc::clone(&reservoir), run.method, ridge))
        .collect();
    let server_model = match run.method {
        Method::Mdrs => ServerModel::Mdrs { delta: run.delta },
        Method::EsnSre => ServerModel::Readout {
            beta: run.beta,
            placement: run.beta_placement,
        },
    };
    let server = Server::new(ids, run.policy, server_model);
    let directory = match &run.exchange {
        Exchange::InProcess => None,
        Exchange::Directory(dir) => Some(MessageDirectory::new(dir)?),
    };

    let scoring_inputs = run
        .test
        .par_iter()
        .map(|s| ScoringInput::prepare(&reservoir, run.method, &s.data))
        .collect::<Result<Vec<_>>>()?;

    let mut logs = Vec::with_capacity(run.rounds as usize);
    let mut all_messages = Vec::new();
    let mut last: Option<(GlobalModelMessage, TrainedModel, Vec<ScoreSeries>, Evaluation)> = None;

    for r in 0..run.rounds {
        let round = r + 1;
        let client_clock = Instant::now();
        let produced = clients
            .par_iter_mut()
            .zip(run.clients.par_iter())
            .map(|(client, data)| client.round(&run.spec, round, round_batch(&data.sequences, r, run.rounds)))
            .collect::<Result<Vec<_>>>()?;
        let delivered: Vec<ClientUpdateMessage> = produced
            .into_iter()
            .flatten()
            .filter(|m| !run.silent_clients.contains(&m.client_id))
            .collect();
        let client_seconds = client_clock.elapsed().as_secs_f64();

        let server_clock = Instant::now();
        let inbox = match &directory {
            None => delivered.clone(),
            Some(dir) => {
                for m in &delivered {
                    dir.write_client(m)?;
                }
                dir.read_round(round)?
            }
        };
        let (global, summary) = server.aggregate(round, &inbox)?;
        if let Some(dir) = &directory {
            dir.write_global(&global)?;
        }
        let server_seconds = server_clock.elapsed().as_secs_f64();

        let model = model_from_global(&global, run.delta, run.beta)?;
        let scores = scoring_inputs
            .par_iter()
            .map(|input| input.score(&model))
            .collect::<Result<Vec<_>>>()?;
        let evaluation = evaluate(&run.test, &scores)?;

        let mut payload_bytes: Vec<ClientPayload> = Vec::new();
        for m in &delivered {
            match payload_bytes.last_mut() {
                Some(p) if p.client_id == m.client_id => p.bytes += m.payload_bytes() as u64,
                _ => payload_bytes.push(ClientPayload {
                    client_id: m.client_id,
                    bytes: m.payload_bytes() as u64,
                }),
            }
        }
        log::info!(
            "round {round}: {} clients, {} payload bytes",
            summary.reporting.len(),
            summary.payload_bytes
        );
        logs.push(RoundLog {
            round,
            reporting: summary.reporting,
            missing: summary.missing,
            payload_bytes,
            total_payload_bytes: summary.payload_bytes,
            client_seconds,
            server_seconds,
            mean_auc_roc: evaluation.report.as_ref().map(|e| e.mean_auc_roc),
            mean_auc_pr: evaluation.report.as_ref().map(|e| e.mean_auc_pr),
        });
        all_messages.extend(delivered);
        last = Some((global, model, scores, evaluation));
    }

    let (global, model, scores, evaluation) = last.expect("at least one round");
    Ok(SimulationOutcome {
        report: RunReport {
            method: run.method,
            n_clients: run.clients.len(),
            feature_dim: match run.method {
                Method::Mdrs => run.spec.feature_dim(),
                Method::EsnSre => run.spec.n_reservoir,
            },
            rounds: logs,
            evaluation,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
        global,
        model,
        reservoir,
        messages: all_messages,
        scores,
    })
}
