//! Ridge readout and squared reconstruction error, the ESN-SRE baseline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdrs::{symmetrize, ScoreSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    pub w_out: DMatrix<f64>,
    pub beta: f64,
}

/// Where the ridge term `βI` enters a federated solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPlacement {
    /// Added once by the server, so the solve matches centralized ridge.
    #[default]
    Server,
    /// Added by each client to its own `B_c`; `C` clients yield `CβI`.
    PerClient,
}

/// Per-client sufficient statistics `A = D Xᵀ` and `B = X Xᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutSufficientStats {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl ReadoutSufficientStats {
    pub fn zeros(n_reservoir: usize, n_output: usize) -> Self {
        Self {
            a: DMatrix::zeros(n_output, n_reservoir),
            b: DMatrix::zeros(n_reservoir, n_reservoir),
        }
    }

    pub fn n_reservoir(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_output(&self) -> usize {
        self.a.nrows()
    }

    /// Adds the statistics of another data block (incremental update).
    pub fn add(&mut self, other: &ReadoutSufficientStats) -> Result<()> {
        if self.a.shape() != other.a.shape() || self.b.shape() != other.b.shape() {
            return Err(Error::dims(
                "readout statistics",
                format!("{:?}/{:?}", self.a.shape(), self.b.shape()),
                format!("{:?}/{:?}", other.a.shape(), other.b.shape()),
            ));
        }
        self.a += &other.a;
        self.b += &other.b;
        Ok(())
    }

    /// Adds `βI` to `B`, the per-client regularization variant.
    pub fn regularized(mut self, beta: f64) -> Self {
        for i in 0..self.b.nrows() {
            self.b[(i, i)] += beta;
        }
        self
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "ridge parameter beta must be positive, got {beta}"
        )))
    }
}

fn check_pair(states: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
    if states.ncols() != targets.ncols() {
        return Err(Error::dims(
            "readout timesteps",
            states.ncols(),
            targets.ncols(),
        ));
    }
    if states.ncols() == 0 {
        return Err(Error::Empty("readout training data has no timesteps"));
    }
    Ok(())
}

pub fn client_stats(states: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<ReadoutSufficientStats> {
    check_pair(states, targets)?;
    let a = targets * states.transpose();
    let mut b = states * states.transpose();
    symmetrize(&mut b);
    Ok(ReadoutSufficientStats { a, b })
}

/// `W_out = A B⁻¹` for symmetric positive definite `B`.
fn solve_readout(a: &DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = b.cholesky().ok_or(Error::NotPositiveDefinite(
        "Cholesky factorization of the readout Gram matrix failed",
    ))?;
    // W B = A  <=>  B Wᵀ = Aᵀ since B is symmetric.
    Ok(chol.solve(&a.transpose()).transpose())
}

/// Centralized ridge regression `W_out = D Xᵀ (X Xᵀ + βI)⁻¹`.
pub fn fit_ridge(states: &DMatrix<f64>, targets: &DMatrix<f64>, beta: f64) -> Result<ReadoutModel> {
    check_beta(beta)?;
    let stats = client_stats(states, targets)?.regularized(beta);
    let w_out = solve_readout(&stats.a, stats.b)?;
    Ok(ReadoutModel { w_out, beta })
}

/// Sums client statistics in ascending client id and solves for `W_out`.
///
/// With [`BetaPlacement::PerClient`] the clients are expected to have
/// regularized their own `B_c`; the server adds nothing.
pub fn aggregate_and_solve(
    stats: &[(u32, ReadoutSufficientStats)],
    beta: f64,
    placement: BetaPlacement,
) -> Result<ReadoutModel> {
    check_beta(beta)?;
    let mut ordered: Vec<&(u32, ReadoutSufficientStats)> = stats.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    if let Some(w) = ordered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(crate::error::ProtocolError::DuplicateClient(w[0].0).into());
    }
    let first = ordered.first().ok_or(Error::Empty("no client statistics"))?;
    let mut total = ReadoutSufficientStats::zeros(first.1.n_reservoir(), first.1.n_output());
    for (_, s) in &ordered {
        total.add(s)?;
    }
    if placement == BetaPlacement::Server {
        total = total.regularized(beta);
    }
    let w_out = solve_readout(&total.a, total.b)?;
    Ok(ReadoutModel { w_out, beta })
}

/// `‖u(t) - W_out x(t)‖²` per timestep.
pub fn sre_score(model: &ReadoutModel, states: &DMatrix<f64>, inputs: &DMatrix<f64>) -> Result<ScoreSeries> {
    if states.nrows() != model.w_out.ncols() {
        return Err(Error::dims("sre states", model.w_out.ncols(), states.nrows()));
    }
    if inputs.nrows() != model.w_out.nrows() {
        return Err(Error::dims("sre inputs", model.w_out.nrows(), inputs.nrows()));
    }
    if inputs.ncols() != states.ncols() {
        return Err(Error::dims("sre timesteps", states.ncols(), inputs.ncols()));
    }
    let residual = inputs - &model.w_out * states;
    Ok(ScoreSeries(
        residual.column_iter().map(|c| c.norm_squared()).collect(),
    ))
}
