//! Centralized training and scoring for both detectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSeries;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_series, mean_over_series, EvalReport};
use crate::mdrs::{fit_precision, PrecisionModel, PrecisionPath, ScoreSeries};
use crate::readout::{self, client_stats, sre_score, ReadoutModel, ReadoutSufficientStats};
use crate::reservoir::{drop_washout, Reservoir};

/// Default ridge parameter for the reconstruction baseline.
pub const DEFAULT_BETA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Mahalanobis distance of (subsampled) reservoir states.
    #[default]
    Mdrs,
    /// Squared reconstruction error of a ridge readout on the full state.
    EsnSre,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mdrs => "mdrs",
            Method::EsnSre => "esn_sre",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Precision(PrecisionModel),
    Readout(ReadoutModel),
}

impl TrainedModel {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Precision(_) => Method::Mdrs,
            TrainedModel::Readout(_) => Method::EsnSre,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        match self {
            TrainedModel::Precision(p) => p.matrix(),
            TrainedModel::Readout(r) => &r.w_out,
        }
    }
}

/// Reconstruction training pair for one sequence: full states and the
/// inputs they should reproduce, washout removed from both.
pub(crate) fn readout_pair(reservoir: &Reservoir, inputs: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let washout = reservoir.spec().washout;
    let states = drop_washout(reservoir.run(inputs)?.states, washout);
    let targets = drop_washout(inputs.clone(), washout);
    Ok((states, targets))
}

pub(crate) fn readout_stats(reservoir: &Reservoir, sequences: &[DMatrix<f64>]) -> Result<ReadoutSufficientStats> {
    let spec = reservoir.spec();
    let mut total = ReadoutSufficientStats::zeros(spec.n_reservoir, spec.n_input);
    for inputs in sequences {
        let (states, targets) = readout_pair(reservoir, inputs)?;
        if states.ncols() > 0 {
            total.add(&client_stats(&states, &targets)?)?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub method: Method,
    pub delta: f64,
    pub beta: f64,
    pub precision_path: PrecisionPath,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            method: Method::Mdrs,
            delta: crate::mdrs::DEFAULT_DELTA,
            beta: DEFAULT_BETA,
            precision_path: PrecisionPath::Batch,
        }
    }
}

/// Trains on every sequence at once, each run from the zero state.
pub fn train_centralized(reservoir: &Reservoir, sequences: &[DMatrix<f64>], options: &TrainOptions) -> Result<TrainedModel> {
    if sequences.is_empty() {
        return Err(Error::Empty("no training sequences"));
    }
    match options.method {
        Method::Mdrs => {
            let features = sequences
                .iter()
                .map(|s| reservoir.training_features(s))
                .collect::<Result<Vec<_>>>()?;
            let model = fit_precision(
                &features,
                reservoir.spec().feature_dim(),
                options.delta,
                options.precision_path,
            )?;
            Ok(TrainedModel::Precision(model))
        }
        Method::EsnSre => {
            let stats = readout_stats(reservoir, sequences)?;
            let model = readout::aggregate_and_solve(&[(0, stats)], options.beta, readout::BetaPlacement::Server)?;
            Ok(TrainedModel::Readout(model))
        }
    }
}

/// Features a model scores for one input sequence, run from the zero state.
#[derive(Debug, Clone)]
pub struct ScoringInput {
    states: DMatrix<f64>,
    inputs: Option<DMatrix<f64>>,
}

impl ScoringInput {
    pub fn prepare(reservoir: &Reservoir, method: Method, inputs: &DMatrix<f64>) -> Result<Self> {
        match method {
            Method::Mdrs => Ok(Self {
                states: reservoir.features(inputs)?,
                inputs: None,
            }),
            Method::EsnSre => Ok(Self {
                states: reservoir.run(inputs)?.states,
                inputs: Some(inputs.clone()),
            }),
        }
    }

    pub fn score(&self, model: &TrainedModel) -> Result<ScoreSeries> {
        match (model, &self.inputs) {
            (TrainedModel::Precision(p), None) => p.score(&self.states),
            (TrainedModel::Readout(r), Some(inputs)) => sre_score(r, &self.states, inputs),
            _ => Err(Error::InvalidParameter(
                "scoring input prepared for a different method".into(),
            )),
        }
    }
}

pub fn score_sequence(reservoir: &Reservoir, model: &TrainedModel, inputs: &DMatrix<f64>) -> Result<ScoreSeries> {
    ScoringInput::prepare(reservoir, model.method(), inputs)?.score(model)
}

/// Metrics over the test series whose labels contain both classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: Option<EvalReport>,
    /// Series left out because a metric is undefined for their labels.
    pub skipped: Vec<String>,
}

pub fn evaluate(test: &[LabeledSeries], scores: &[ScoreSeries]) -> Result<Evaluation> {
    if test.len() != scores.len() {
        return Err(Error::dims("evaluated series", test.len(), scores.len()));
    }
    let mut per_series = Vec::with_capacity(test.len());
    let mut skipped = Vec::new();
    for (series, s) in test.iter().zip(scores) {
        match evaluate_series(series.id.clone(), s.as_slice(), &series.labels) {
            Ok(m) => per_series.push(m),
            Err(Error::UndefinedMetric(why)) => {
                log::warn!("skipping series {}: {why}", series.id);
                skipped.push(series.id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    let report = if per_series.is_empty() {
        None
    } else {
        Some(mean_over_series(per_series)?)
    };
    Ok(Evaluation { report, skipped })
}
