//! Executes a resolved configuration through the library pipeline.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use resfed_core::data::{partition, Normalization, TimeSeriesDataset};
use resfed_core::federation::{
    rsmx, simulate, ClientUpdateMessage, Exchange, FederationRun, GlobalKind, MessageDirectory, Role, RunReport,
};
use resfed_core::mdrs::ScoreSeries;
use resfed_core::pipeline::{evaluate, train_centralized, Evaluation, ScoringInput, TrainOptions};
use resfed_core::readout::{BetaPlacement, ReadoutModel};
use resfed_core::{Method, PrecisionModel, Reservoir, ReservoirSpec, TrainedModel};

use crate::config::{ExchangeMode, Mode, RunConfig};
use crate::error::{CliError, CliResult};

pub const MODEL_FILE: &str = "model.rsmx";
pub const MANIFEST_FILE: &str = "model.json";
pub const FINGERPRINT_PREFIX: &str = "# config_fingerprint: ";

pub struct Resolved {
    pub config: RunConfig,
    pub dataset: TimeSeriesDataset,
    pub spec: ReservoirSpec,
    pub fingerprint: String,
}

pub fn resolve(config: RunConfig) -> CliResult<Resolved> {
    config.validate()?;
    let dataset = config.dataset()?;
    let spec = config.reservoir_spec(dataset.n_channels())?;
    let fingerprint = config.fingerprint(&spec)?;
    Ok(Resolved {
        config,
        dataset,
        spec,
        fingerprint,
    })
}

pub struct Outcome {
    pub model: TrainedModel,
    pub evaluation: Evaluation,
    pub federation: Option<RunReport>,
    pub messages: Vec<ClientUpdateMessage>,
}

/// Trains (centrally or federated, per `mode`) and scores the test series.
pub fn execute(r: &Resolved, mode: Mode, message_dir: Option<PathBuf>) -> CliResult<Outcome> {
    let c = &r.config;
    match mode {
        Mode::Centralized => {
            let reservoir = Reservoir::new(r.spec.clone())?;
            let options = TrainOptions {
                method: c.method,
                delta: c.delta,
                beta: c.beta,
                precision_path: c.precision_path,
            };
            let model = train_centralized(&reservoir, &r.dataset.train, &options)?;
            let scores = score_all(&reservoir, &model, &r.dataset)?;
            let evaluation = evaluate(&r.dataset.test, &scores)?;
            Ok(Outcome {
                model,
                evaluation,
                federation: None,
                messages: Vec::new(),
            })
        }
        Mode::Incfed => {
            let clients = partition(&r.dataset, c.n_clients, c.partition)?;
            let mut run = FederationRun::new(r.spec.clone(), c.method, clients, r.dataset.test.clone());
            run.delta = c.delta;
            run.beta = c.beta;
            run.beta_placement = if c.beta_per_client {
                BetaPlacement::PerClient
            } else {
                BetaPlacement::Server
            };
            run.rounds = c.rounds;
            run.policy = c.aggregation;
            run.silent_clients = c.drop_clients.clone();
            if let (ExchangeMode::Directory, Some(dir)) = (c.exchange, message_dir) {
                run.exchange = Exchange::Directory(dir);
            }
            let out = simulate(&run)?;
            Ok(Outcome {
                model: out.model,
                evaluation: out.report.evaluation.clone(),
                federation: Some(out.report),
                messages: out.messages,
            })
        }
    }
}

pub fn score_all(reservoir: &Reservoir, model: &TrainedModel, dataset: &TimeSeriesDataset) -> CliResult<Vec<ScoreSeries>> {
    dataset
        .test
        .iter()
        .map(|s| Ok(ScoringInput::prepare(reservoir, model.method(), &s.data)?.score(model)?))
        .collect()
}

/// Everything needed to reuse a model file, stored next to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_fingerprint: String,
    pub method: Method,
    pub mode: Mode,
    pub delta: f64,
    pub beta: f64,
    pub reservoir: ReservoirSpec,
    pub channels: Vec<String>,
    pub normalization: Option<Normalization>,
    pub model_file: String,
    pub model_sha256: String,
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_model(dir: &Path, r: &Resolved, mode: Mode, model: &TrainedModel) -> CliResult<Manifest> {
    use sha2::{Digest, Sha256};
    let role = match model {
        TrainedModel::Precision(_) => Role::MdrsPrecision,
        TrainedModel::Readout(_) => Role::EsnWout,
    };
    let bytes = rsmx::encode(model.matrix(), role).map_err(resfed_core::Error::from)?;
    write_file(&dir.join(MODEL_FILE), &bytes)?;
    let manifest = Manifest {
        config_fingerprint: r.fingerprint.clone(),
        method: r.config.method,
        mode,
        delta: r.config.delta,
        beta: r.config.beta,
        reservoir: r.spec.clone(),
        channels: r.dataset.channels.clone(),
        normalization: r.dataset.normalization.clone(),
        model_file: MODEL_FILE.into(),
        model_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(&path, e.to_string()))
}

pub fn read_model(dir: &Path, manifest: &Manifest) -> CliResult<TrainedModel> {
    let path = dir.join(&manifest.model_file);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let (role, matrix) = rsmx::decode(&bytes).map_err(resfed_core::Error::from)?;
    let model = match GlobalKind::from_role(role) {
        Some(GlobalKind::MdrsPrecision) => TrainedModel::Precision(PrecisionModel::from_parts(matrix, manifest.delta)?),
        Some(GlobalKind::EsnWout) => TrainedModel::Readout(ReadoutModel {
            w_out: matrix,
            beta: manifest.beta,
        }),
        None => return Err(CliError::data(&path, format!("{role} is not a model role"))),
    };
    if model.method() != manifest.method {
        return Err(CliError::data(&path, "model role does not match the manifest method"));
    }
    Ok(model)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Writes `<dir>/<id>.csv` with the fingerprint comment and `timestep,score`
/// rows (timesteps from 0).
pub fn write_scores(dir: &Path, id: &str, scores: &ScoreSeries, fingerprint: &str) -> CliResult<PathBuf> {
    let mut text = format!("{FINGERPRINT_PREFIX}{fingerprint}\ntimestep,score\n");
    for (t, s) in scores.as_slice().iter().enumerate() {
        text.push_str(&format!("{t},{s}\n"));
    }
    let path = dir.join(format!("{id}.csv"));
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

/// Writes every client message as an RSMX file for audit.
pub fn write_messages(dir: &Path, messages: &[ClientUpdateMessage]) -> CliResult<()> {
    let store = MessageDirectory::new(dir)?;
    for m in messages {
        store.write_client(m)?;
    }
    Ok(())
}

/// Exclusive claim on an output directory for the life of a command.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(".resfed.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Config(format!(
                "{} is in use by another run; remove {} if it is stale",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
