//! Desk-scale benchmark: multichannel sums of sinusoids with Gaussian noise,
//! clean training segments and labeled anomalies injected into test
//! segments.
//!
//! Draw order from a xoshiro256++ stream seeded with `seed`: per channel the
//! component amplitudes, periods and offsets; then per series the component
//! phases and the noise of the training and test segments. Anomaly
//! placements come from a second stream, so the clean signal does not
//! depend on the anomaly list.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::{LabeledSeries, TimeSeriesDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Adds `±magnitude·σ` over the segment.
    Spike,
    /// Adds a constant `±magnitude·σ` offset over the segment; meant for
    /// longer durations than spikes.
    LevelShift,
    /// Plays the segment back `1 + magnitude` times faster.
    FrequencyShift,
}

fn default_count() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    /// Anomalies per test series, placed at random.
    #[serde(default = "default_count")]
    pub count: usize,
    /// Inclusive range of segment lengths.
    pub duration: (usize, usize),
    /// In units of the channel's clean standard deviation (for shifts: the
    /// relative speed-up).
    pub magnitude: f64,
    /// Fixed segment starts used instead of random placement.
    #[serde(default)]
    pub starts: Vec<usize>,
    /// Affected channel; random per anomaly when absent.
    #[serde(default)]
    pub channel: Option<usize>,
}

fn default_n_channels() -> usize {
    3
}
fn default_n_series() -> usize {
    24
}
fn default_length() -> usize {
    1000
}
fn default_components() -> usize {
    3
}
fn default_period_range() -> (f64, f64) {
    (20.0, 200.0)
}
fn default_noise() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_n_channels")]
    pub n_channels: usize,
    /// Independent series, each with a training and a test segment.
    #[serde(default = "default_n_series")]
    pub n_series: usize,
    #[serde(default = "default_length")]
    pub train_length: usize,
    #[serde(default = "default_length")]
    pub test_length: usize,
    #[serde(default)]
    pub seed: u64,
    /// Sinusoidal components per channel.
    #[serde(default = "default_components")]
    pub n_components: usize,
    #[serde(default = "default_period_range")]
    pub period_range: (f64, f64),
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_channels: default_n_channels(),
            n_series: default_n_series(),
            train_length: default_length(),
            test_length: default_length(),
            seed: 0,
            n_components: default_components(),
            period_range: default_period_range(),
            noise_std: default_noise(),
            anomalies: Vec::new(),
        }
    }
}

impl SyntheticSpec {
    /// The 24-series benchmark: 2000-step segments, two short spikes and one
    /// level shift per test series, each on a random channel.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            seed,
            train_length: 2000,
            test_length: 2000,
            anomalies: vec![
                AnomalySpec {
                    kind: AnomalyKind::Spike,
                    count: 2,
                    duration: (3, 10),
                    magnitude: 4.0,
                    starts: Vec::new(),
                    channel: None,
                },
                AnomalySpec {
                    kind: AnomalyKind::LevelShift,
                    count: 1,
                    duration: (30, 80),
                    magnitude: 3.0,
                    starts: Vec::new(),
                    channel: None,
                },
            ],
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_channels == 0 || self.n_series == 0 || self.train_length == 0 || self.test_length == 0 {
            return bad("synthetic sizes must be positive".into());
        }
        let (lo, hi) = self.period_range;
        if !(lo >= 2.0 && hi >= lo) {
            return bad(format!("period range {:?} invalid", self.period_range));
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be non-negative".into());
        }
        for a in &self.anomalies {
            let (dmin, dmax) = a.duration;
            if dmin == 0 || dmax < dmin || dmax > self.test_length {
                return bad(format!("anomaly duration {:?} invalid", a.duration));
            }
            if a.channel.is_some_and(|c| c >= self.n_channels) {
                return bad(format!("anomaly channel {:?} out of range", a.channel));
            }
            if !a.magnitude.is_finite() {
                return bad("anomaly magnitude must be finite".into());
            }
        }
        Ok(())
    }
}

/// One placed anomaly segment `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    pub start: usize,
    pub len: usize,
    pub channel: usize,
    /// Signed size: offset in data units for spikes and level shifts,
    /// relative speed-up for frequency shifts.
    pub amount: f64,
}

/// Applies `anomaly` to `series` (channels × time) and marks its labels.
pub fn inject(series: &mut DMatrix<f64>, labels: &mut [bool], anomaly: &Anomaly) -> Result<()> {
    let end = anomaly.start + anomaly.len;
    if end > series.ncols() || anomaly.channel >= series.nrows() || labels.len() != series.ncols() {
        return Err(Error::InvalidParameter(format!(
            "anomaly {anomaly:?} does not fit a {}x{} series",
            series.nrows(),
            series.ncols()
        )));
    }
    let c = anomaly.channel;
    match anomaly.kind {
        AnomalyKind::Spike | AnomalyKind::LevelShift => {
            for t in anomaly.start..end {
                series[(c, t)] += anomaly.amount;
            }
        }
        AnomalyKind::FrequencyShift => {
            let original: Vec<f64> = series.row(c).iter().copied().collect();
            let last = original.len() - 1;
            for t in anomaly.start..end {
                let pos = anomaly.start as f64 + (t - anomaly.start) as f64 * (1.0 + anomaly.amount);
                let pos = pos.min(last as f64);
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                let next = original[(i + 1).min(last)];
                series[(c, t)] = original[i] * (1.0 - frac) + next * frac;
            }
        }
    }
    labels[anomaly.start..end].iter_mut().for_each(|l| *l = true);
    Ok(())
}

struct Component {
    amplitude: f64,
    period: f64,
}

fn overlaps(taken: &[(usize, usize)], start: usize, len: usize) -> bool {
    taken.iter().any(|&(s, l)| start < s + l && s < start + len)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TimeSeriesDataset> {
    spec.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let mut anomaly_rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let channels: Vec<(f64, Vec<Component>)> = (0..spec.n_channels)
        .map(|_| {
            let comps = (0..spec.n_components)
                .map(|_| Component {
                    amplitude: rng.random_range(0.5..1.5) / spec.n_components as f64,
                    period: rng.random_range(spec.period_range.0..=spec.period_range.1),
                })
                .collect();
            (rng.random_range(-1.0..1.0), comps)
        })
        .collect();

    let total = spec.train_length + spec.test_length;
    let mut train = Vec::with_capacity(spec.n_series);
    let mut test = Vec::with_capacity(spec.n_series);
    for s in 0..spec.n_series {
        let phases: Vec<Vec<f64>> = channels
            .iter()
            .map(|(_, comps)| comps.iter().map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect())
            .collect();
        let clean = DMatrix::from_fn(spec.n_channels, total, |c, t| {
            let (offset, comps) = &channels[c];
            offset
                + comps
                    .iter()
                    .zip(&phases[c])
                    .map(|(k, ph)| k.amplitude * (std::f64::consts::TAU * t as f64 / k.period + ph).sin())
                    .sum::<f64>()
        });
        let sigma: Vec<f64> = (0..spec.n_channels)
            .map(|c| {
                let row = clean.row(c);
                let mean = row.mean();
                (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / total as f64).sqrt()
            })
            .collect();
        let mut full = clean;
        for v in full.iter_mut() {
            *v += spec.noise_std * normal.sample(&mut rng);
        }

        let train_part = full.columns(0, spec.train_length).into_owned();
        let mut test_part = full.columns(spec.train_length, spec.test_length).into_owned();
        let mut labels = vec![false; spec.test_length];
        let mut taken: Vec<(usize, usize)> = Vec::new();
        for a in &spec.anomalies {
            let fixed = !a.starts.is_empty();
            let n = if fixed { a.starts.len() } else { a.count };
            for k in 0..n {
                let len = anomaly_rng.random_range(a.duration.0..=a.duration.1);
                let start = if fixed {
                    let start = a.starts[k];
                    if start + len > spec.test_length || overlaps(&taken, start, len) {
                        return Err(Error::InvalidParameter(format!(
                            "anomaly at {start} with length {len} is out of bounds or overlaps"
                        )));
                    }
                    start
                } else {
                    let mut placed = None;
                    for _ in 0..10_000 {
                        let start = anomaly_rng.random_range(0..=spec.test_length - len);
                        if !overlaps(&taken, start, len) {
                            placed = Some(start);
                            break;
                        }
                    }
                    placed.ok_or_else(|| {
                        Error::InvalidParameter("cannot place non-overlapping anomalies; too many or too long".into())
                    })?
                };
                let channel = a.channel.unwrap_or_else(|| anomaly_rng.random_range(0..spec.n_channels));
                let sign = if anomaly_rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let amount = match a.kind {
                    AnomalyKind::FrequencyShift => a.magnitude,
                    _ => sign * a.magnitude * sigma[channel],
                };
                taken.push((start, len));
                inject(
                    &mut test_part,
                    &mut labels,
                    &Anomaly {
                        kind: a.kind,
                        start,
                        len,
                        channel,
                        amount,
                    },
                )?;
            }
        }
        train.push(train_part);
        test.push(LabeledSeries {
            id: format!("series_{s:03}"),
            data: test_part,
            labels,
        });
    }

    Ok(TimeSeriesDataset {
        channels: (0..spec.n_channels).map(|c| format!("ch{c}")).collect(),
        train,
        test,
        normalization: None,
    })
}
