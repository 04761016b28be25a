//! Mahalanobis distance of reservoir states.
//!
//! Training states are summarized by the uncentered covariance
//! `Φ = Σ_t x(t) x(t)ᵀ`; the scoring artifact is the regularized precision
//! `P = (Φ + δI)⁻¹`, built either in one Cholesky inversion or by rank-1
//! Woodbury updates from `P = I/δ`. The score of a state is `xᵀ P x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularizer used in the reference experiments.
pub const DEFAULT_DELTA: f64 = 1e-4;

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "regularizer delta must be positive, got {delta}"
        )))
    }
}

/// Running sum of state outer products.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAccumulator {
    phi: DMatrix<f64>,
    count: u64,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            phi: DMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    /// Rebuilds an accumulator from a received matrix.
    pub fn from_parts(phi: DMatrix<f64>, count: u64) -> Result<Self> {
        if !phi.is_square() {
            return Err(Error::dims(
                "covariance",
                "square matrix",
                format!("{}x{}", phi.nrows(), phi.ncols()),
            ));
        }
        Ok(Self { phi, count })
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn into_phi(self) -> DMatrix<f64> {
        self.phi
    }

    /// Adds `states · statesᵀ`, one column per timestep.
    pub fn accumulate(&mut self, states: &DMatrix<f64>) -> Result<()> {
        if states.nrows() != self.dim() {
            return Err(Error::dims("accumulate", self.dim(), states.nrows()));
        }
        if states.ncols() == 0 {
            return Ok(());
        }
        self.phi.gemm(1.0, states, &states.transpose(), 1.0);
        symmetrize(&mut self.phi);
        self.count += states.ncols() as u64;
        Ok(())
    }

    /// Adds another accumulator's sum.
    pub fn merge(&mut self, other: &CovarianceAccumulator) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::dims("merge", self.dim(), other.dim()));
        }
        self.phi += &other.phi;
        self.count += other.count;
        Ok(())
    }
}

/// Regularized inverse covariance together with the `δ` it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionModel {
    p: DMatrix<f64>,
    delta: f64,
}

impl PrecisionModel {
    /// `P(0) = I/δ`, the precision before any data.
    pub fn initial(dim: usize, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            p: DMatrix::identity(dim, dim) / delta,
            delta,
        })
    }

    /// Wraps a received precision matrix.
    pub fn from_parts(p: DMatrix<f64>, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if !p.is_square() {
            return Err(Error::dims(
                "precision",
                "square matrix",
                format!("{}x{}", p.nrows(), p.ncols()),
            ));
        }
        Ok(Self { p, delta })
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.p
    }

    /// Woodbury rank-1 update with one training state, O(d²).
    pub fn online_update(&mut self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dims("online update", self.dim(), x.len()));
        }
        let px = &self.p * x;
        let denom = 1.0 + x.dot(&px);
        self.p.ger(-1.0 / denom, &px, &px, 1.0);
        symmetrize(&mut self.p);
        Ok(())
    }

    /// Feeds every column of `states` through [`online_update`](Self::online_update).
    pub fn online_update_all(&mut self, states: &DMatrix<f64>) -> Result<()> {
        if states.nrows() != self.dim() {
            return Err(Error::dims("online update", self.dim(), states.nrows()));
        }
        for col in states.column_iter() {
            self.online_update(&col.into_owned())?;
        }
        Ok(())
    }

    /// Squared Mahalanobis distance of each column of `states`.
    pub fn score(&self, states: &DMatrix<f64>) -> Result<ScoreSeries> {
        if states.nrows() != self.dim() {
            return Err(Error::dims("score", self.dim(), states.nrows()));
        }
        let projected = &self.p * states;
        let scores = states
            .column_iter()
            .zip(projected.column_iter())
            .map(|(x, px)| x.dot(&px))
            .collect();
        Ok(ScoreSeries(scores))
    }
}

/// `(Φ + δI)⁻¹` through a Cholesky factorization.
pub fn batch_precision(acc: &CovarianceAccumulator, delta: f64) -> Result<PrecisionModel> {
    check_delta(delta)?;
    let d = acc.dim();
    let regularized = acc.phi() + DMatrix::identity(d, d) * delta;
    let mut p = regularized
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(
            "Cholesky factorization of the regularized covariance failed",
        ))?
        .inverse();
    symmetrize(&mut p);
    Ok(PrecisionModel { p, delta })
}

/// Per-timestep anomaly scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreSeries(pub Vec<f64>);

impl ScoreSeries {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// How the precision matrix is computed from training states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionPath {
    /// Accumulate the covariance and invert once.
    #[default]
    Batch,
    /// Woodbury update per state from `I/δ`.
    Online,
}

/// Fits a precision model on training feature matrices taken in order.
pub fn fit_precision(
    sequences: &[DMatrix<f64>],
    dim: usize,
    delta: f64,
    path: PrecisionPath,
) -> Result<PrecisionModel> {
    match path {
        PrecisionPath::Batch => {
            let mut acc = CovarianceAccumulator::new(dim);
            for s in sequences {
                acc.accumulate(s)?;
            }
            batch_precision(&acc, delta)
        }
        PrecisionPath::Online => {
            let mut model = PrecisionModel::initial(dim, delta)?;
            for s in sequences {
                model.online_update_all(s)?;
            }
            Ok(model)
        }
    }
}

/// Frobenius norm of `a - b` relative to the norm of `b`.
pub fn frobenius_relative(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
