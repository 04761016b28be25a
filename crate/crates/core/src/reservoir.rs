//! Echo state network reservoir shared by every client.
//!
//! Weights are a pure function of [`ReservoirSpec`]. Generation procedure:
//!
//! 1. `W_in` (N_x × N_u) is filled row-major from stream `InputWeights`, each
//!    entry `uniform(-input_scaling, input_scaling)`.
//! 2. `W` gets `k = round(density · N_x²)` structural non-zeros. Attempt `a`
//!    uses stream `Recurrent(a)`: the flat positions are the first `k` of a
//!    partial Fisher-Yates shuffle of `0..N_x²`, sorted ascending, and each
//!    then receives `uniform(-1, 1)` in that order.
//! 3. `W` is rescaled so that its estimated spectral radius equals
//!    `spectral_radius`; see [`estimate_spectral_radius`]. A draw whose
//!    estimate vanishes is discarded and the next attempt is made, up to
//!    [`MAX_REDRAWS`] redraws.
//! 4. Subsample indices are the first `subsample_size` of a partial
//!    Fisher-Yates shuffle of `0..N_x` on stream `Subsample`, sorted.
//!
//! Stream and draw definitions are in [`crate::rng`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Stream, StreamId};

/// Power-iteration steps used for the spectral radius estimate.
pub const POWER_ITERATIONS: usize = 1000;

/// Redraws of `W` allowed after the first attempt.
pub const MAX_REDRAWS: u32 = 8;

fn default_n_reservoir() -> usize {
    500
}
fn default_leak_rate() -> f64 {
    1.0
}
fn default_spectral_radius() -> f64 {
    0.95
}
fn default_input_scaling() -> f64 {
    0.001
}
fn default_density() -> f64 {
    0.1
}
fn default_subsample_size() -> usize {
    200
}

/// Hyperparameters and seed from which every participant regenerates the
/// same reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSpec {
    pub n_input: usize,
    #[serde(default = "default_n_reservoir")]
    pub n_reservoir: usize,
    #[serde(default = "default_leak_rate")]
    pub leak_rate: f64,
    #[serde(default = "default_spectral_radius")]
    pub spectral_radius: f64,
    #[serde(default = "default_input_scaling")]
    pub input_scaling: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_subsample_size")]
    pub subsample_size: usize,
    /// Leading states of each sequence left out of covariance accumulation.
    #[serde(default)]
    pub washout: usize,
}

impl ReservoirSpec {
    /// Defaults used in the reference experiments: 500 nodes, 200 sampled,
    /// leak 1.0, spectral radius 0.95, input scaling 0.001, density 0.1.
    pub fn new(n_input: usize) -> Self {
        Self {
            n_input,
            n_reservoir: default_n_reservoir(),
            leak_rate: default_leak_rate(),
            spectral_radius: default_spectral_radius(),
            input_scaling: default_input_scaling(),
            density: default_density(),
            seed: 0,
            subsample_size: default_subsample_size(),
            washout: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n_input == 0 {
            return fail("n_input must be positive".into());
        }
        if self.n_reservoir == 0 {
            return fail("n_reservoir must be positive".into());
        }
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return fail(format!("leak_rate {} outside (0, 1]", self.leak_rate));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return fail(format!(
                "spectral_radius {} must be positive",
                self.spectral_radius
            ));
        }
        if !(self.input_scaling > 0.0 && self.input_scaling.is_finite()) {
            return fail(format!(
                "input_scaling {} must be positive",
                self.input_scaling
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return fail(format!("density {} outside (0, 1]", self.density));
        }
        if self.subsample_size == 0 || self.subsample_size > self.n_reservoir {
            return fail(format!(
                "subsample_size {} outside [1, {}]",
                self.subsample_size, self.n_reservoir
            ));
        }
        Ok(())
    }

    /// Dimension of the feature vectors used for scoring.
    pub fn feature_dim(&self) -> usize {
        self.subsample_size
    }
}

/// Compressed sparse row matrix, just enough for the reservoir recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets sorted row-major.
    fn from_sorted_triplets(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut row_ptr = vec![0; n_rows + 1];
        for &(r, _, _) in entries {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    /// Number of structurally non-zero entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `out = self * v`.
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *o = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, &w)| w * v[c])
                .sum();
        }
    }

    fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|w| *w *= factor);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }

    /// Test helper: a sparse matrix holding every non-zero of `dense`.
    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                if dense[(r, c)] != 0.0 {
                    entries.push((r, c, dense[(r, c)]));
                }
            }
        }
        Self::from_sorted_triplets(dense.nrows(), dense.ncols(), &entries)
    }
}

/// Spectral radius estimate by normalized power iteration from the all-ones
/// vector. The estimate is the geometric mean of the per-step growth factors
/// over the second half of the iterations, which also settles when the
/// dominant eigenvalues form a complex pair. Returns 0 when an iterate
/// vanishes.
pub fn estimate_spectral_radius(w: &SparseMatrix, iterations: usize) -> f64 {
    let n = w.nrows();
    assert_eq!(n, w.ncols(), "spectral radius of a non-square matrix");
    let iterations = iterations.max(2);
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    let mut log_growth = 0.0;
    let mut counted = 0usize;
    for step in 0..iterations {
        w.mul_vec_into(&v, &mut next);
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return 0.0;
        }
        if step >= iterations / 2 {
            log_growth += norm.ln();
            counted += 1;
        }
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / norm;
        }
    }
    (log_growth / counted as f64).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWeights {
    pub w_in: DMatrix<f64>,
    pub w: SparseMatrix,
    /// Sorted, distinct node indices kept for scoring.
    pub subsample_indices: Vec<usize>,
}

impl ReservoirWeights {
    /// Assembles weights by hand. `w_in` must be N_x × N_u and `w` square.
    pub fn from_parts(
        w_in: DMatrix<f64>,
        w: &DMatrix<f64>,
        subsample_indices: Vec<usize>,
    ) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() != w_in.nrows() {
            return Err(Error::dims(
                "reservoir weights",
                format!("{0}x{0}", w_in.nrows()),
                format!("{}x{}", w.nrows(), w.ncols()),
            ));
        }
        check_indices(&subsample_indices, w.nrows())?;
        Ok(Self {
            w_in,
            w: SparseMatrix::from_dense(w),
            subsample_indices,
        })
    }

    pub fn n_reservoir(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_input(&self) -> usize {
        self.w_in.ncols()
    }
}

fn check_indices(indices: &[usize], bound: usize) -> Result<()> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= bound) {
        return Err(Error::IndexOutOfRange { index: bad, bound });
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "subsample indices must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn draw_recurrent(spec: &ReservoirSpec, attempt: u32) -> Option<SparseMatrix> {
    let n = spec.n_reservoir;
    let cells = n * n;
    let nnz = ((spec.density * cells as f64).round() as usize).min(cells);
    if nnz == 0 {
        return None;
    }
    let mut stream = Stream::new(spec.seed, StreamId::Recurrent(attempt));
    let mut positions = stream.choose_without_replacement(cells, nnz);
    positions.sort_unstable();
    let entries: Vec<(usize, usize, f64)> = positions
        .into_iter()
        .map(|p| (p / n, p % n, stream.uniform(-1.0, 1.0)))
        .collect();
    Some(SparseMatrix::from_sorted_triplets(n, n, &entries))
}

pub fn build_weights(spec: &ReservoirSpec) -> Result<ReservoirWeights> {
    spec.validate()?;
    let (n, m) = (spec.n_reservoir, spec.n_input);

    let mut input_stream = Stream::new(spec.seed, StreamId::InputWeights);
    let mut w_in_row_major = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        w_in_row_major.push(input_stream.uniform(-spec.input_scaling, spec.input_scaling));
    }
    let w_in = DMatrix::from_row_slice(n, m, &w_in_row_major);

    let mut recurrent = None;
    for attempt in 0..=MAX_REDRAWS {
        let mut w = draw_recurrent(spec, attempt).ok_or_else(|| {
            Error::DegenerateReservoir(format!(
                "density {} leaves no non-zero entries in a {n}x{n} matrix",
                spec.density
            ))
        })?;
        let radius = estimate_spectral_radius(&w, POWER_ITERATIONS);
        if radius > 0.0 {
            w.scale(spec.spectral_radius / radius);
            recurrent = Some(w);
            break;
        }
        log::debug!("recurrent draw {attempt} has zero spectral radius, redrawing");
    }
    let w = recurrent.ok_or_else(|| {
        Error::DegenerateReservoir(format!(
            "spectral radius of the recurrent draw vanished after {} attempts",
            MAX_REDRAWS + 1
        ))
    })?;

    let mut sub_stream = Stream::new(spec.seed, StreamId::Subsample);
    let mut subsample_indices = sub_stream.choose_without_replacement(n, spec.subsample_size);
    subsample_indices.sort_unstable();

    Ok(ReservoirWeights {
        w_in,
        w,
        subsample_indices,
    })
}

/// Reservoir states over one input sequence; column `t` is `x(t+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub states: DMatrix<f64>,
    pub initial_state: DVector<f64>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }

    pub fn final_state(&self) -> DVector<f64> {
        match self.states.ncols() {
            0 => self.initial_state.clone(),
            t => self.states.column(t - 1).into_owned(),
        }
    }
}

/// Runs the leaky-tanh recurrence from the zero state.
pub fn run_reservoir(
    weights: &ReservoirWeights,
    spec: &ReservoirSpec,
    inputs: &DMatrix<f64>,
) -> Result<StateTrajectory> {
    let zero = DVector::zeros(weights.n_reservoir());
    run_reservoir_from(weights, spec, inputs, &zero)
}

/// Runs the recurrence from an arbitrary state, e.g. the final state of a
/// previous call.
pub fn run_reservoir_from(
    weights: &ReservoirWeights,
    spec: &ReservoirSpec,
    inputs: &DMatrix<f64>,
    initial: &DVector<f64>,
) -> Result<StateTrajectory> {
    let n = weights.n_reservoir();
    if inputs.nrows() != weights.n_input() {
        return Err(Error::dims(
            "reservoir inputs",
            format!("{} rows", weights.n_input()),
            format!("{} rows", inputs.nrows()),
        ));
    }
    if initial.len() != n {
        return Err(Error::dims("initial state", n, initial.len()));
    }
    if inputs.ncols() == 0 {
        return Err(Error::Empty("input sequence has no timesteps"));
    }
    if let Some(column) = (0..inputs.ncols()).find(|&t| inputs.column(t).iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteInput { column });
    }

    let alpha = spec.leak_rate;
    let mut states = DMatrix::zeros(n, inputs.ncols());
    let mut x: Vec<f64> = initial.iter().copied().collect();
    let mut recurrent = vec![0.0; n];
    for t in 0..inputs.ncols() {
        weights.w.mul_vec_into(&x, &mut recurrent);
        let driven = &weights.w_in * inputs.column(t);
        for i in 0..n {
            let activation = (driven[i] + recurrent[i]).tanh();
            x[i] = (1.0 - alpha) * x[i] + alpha * activation;
        }
        states.column_mut(t).copy_from_slice(&x);
    }
    Ok(StateTrajectory {
        states,
        initial_state: initial.clone(),
    })
}

/// Selects the rows of `states` named by `indices`, in the given order.
pub fn subsample(states: &DMatrix<f64>, indices: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= states.nrows()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            bound: states.nrows(),
        });
    }
    Ok(states.select_rows(indices))
}

/// A spec together with the weights it generates.
#[derive(Debug, Clone)]
pub struct Reservoir {
    spec: ReservoirSpec,
    weights: ReservoirWeights,
}

impl Reservoir {
    pub fn new(spec: ReservoirSpec) -> Result<Self> {
        let weights = build_weights(&spec)?;
        Ok(Self { spec, weights })
    }

    pub fn from_parts(spec: ReservoirSpec, weights: ReservoirWeights) -> Result<Self> {
        if weights.n_reservoir() != spec.n_reservoir
            || weights.n_input() != spec.n_input
            || weights.subsample_indices.len() != spec.subsample_size
        {
            return Err(Error::InvalidSpec(
                "weights do not match the spec dimensions".into(),
            ));
        }
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &ReservoirSpec {
        &self.spec
    }

    pub fn weights(&self) -> &ReservoirWeights {
        &self.weights
    }

    pub fn run(&self, inputs: &DMatrix<f64>) -> Result<StateTrajectory> {
        run_reservoir(&self.weights, &self.spec, inputs)
    }

    /// Subsampled states of `inputs` run from the zero state.
    pub fn features(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let trajectory = self.run(inputs)?;
        subsample(&trajectory.states, &self.weights.subsample_indices)
    }

    /// Features with the washout prefix removed, as used for training.
    pub fn training_features(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let features = self.features(inputs)?;
        Ok(drop_washout(features, self.spec.washout))
    }
}

pub(crate) fn drop_washout(states: DMatrix<f64>, washout: usize) -> DMatrix<f64> {
    if washout == 0 {
        return states;
    }
    let keep = states.ncols().saturating_sub(washout);
    states.columns(states.ncols() - keep, keep).into_owned()
}
