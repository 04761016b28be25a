//! Threshold-free evaluation of per-timestep anomaly scores.
//!
//! Both curves are swept in blocks of equal scores, so tied timesteps always
//! cross a threshold together. The PR area is the step sum
//! `Σ (R_k − R_{k−1}) · P_k` with `R_0 = 0`; no `(0, 1)` anchor is added.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores paired with binary labels (`true` = anomaly).
#[derive(Debug, Clone, Copy)]
pub struct LabeledScores<'a> {
    scores: &'a [f64],
    labels: &'a [bool],
}

impl<'a> LabeledScores<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::dims("labeled scores", scores.len(), labels.len()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidParameter("NaN anomaly score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }

    /// Counts `(positives, negatives)` per block of equal scores, highest
    /// score first.
    fn blocks_descending(&self) -> Vec<(u64, u64)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .unwrap_or(Ordering::Equal)
        });
        let mut blocks: Vec<(u64, u64)> = Vec::new();
        let mut last: Option<f64> = None;
        for i in order {
            let s = self.scores[i];
            if last != Some(s) {
                blocks.push((0, 0));
                last = Some(s);
            }
            let block = blocks.last_mut().expect("block pushed above");
            if self.labels[i] {
                block.0 += 1;
            } else {
                block.1 += 1;
            }
        }
        blocks
    }
}

/// Probability that a random anomaly outscores a random normal point, ties
/// counting one half.
pub fn auc_roc(ls: &LabeledScores<'_>) -> Result<f64> {
    let (pos, neg) = (ls.positives() as u64, ls.negatives() as u64);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC-ROC needs both classes"));
    }
    // Twice the Mann-Whitney count keeps everything in integers.
    let mut negatives_above = 0u64;
    let mut twice_wins = 0u64;
    for (p, n) in ls.blocks_descending() {
        twice_wins += p * (2 * (neg - negatives_above - n) + n);
        negatives_above += n;
    }
    Ok(twice_wins as f64 / (2 * pos * neg) as f64)
}

/// Area under the precision-recall step curve.
pub fn auc_pr(ls: &LabeledScores<'_>) -> Result<f64> {
    let pos = ls.positives() as u64;
    if pos == 0 {
        return Err(Error::UndefinedMetric("AUC-PR needs at least one anomaly"));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area = 0.0;
    for (p, n) in ls.blocks_descending() {
        tp += p;
        fp += n;
        if p > 0 {
            area += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetrics {
    pub series_id: String,
    pub auc_roc: f64,
    pub auc_pr: f64,
}

pub fn evaluate_series(series_id: impl Into<String>, scores: &[f64], labels: &[bool]) -> Result<SeriesMetrics> {
    let ls = LabeledScores::new(scores, labels)?;
    Ok(SeriesMetrics {
        series_id: series_id.into(),
        auc_roc: auc_roc(&ls)?,
        auc_pr: auc_pr(&ls)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_series: Vec<SeriesMetrics>,
    pub mean_auc_roc: f64,
    pub mean_auc_pr: f64,
    /// Placeholders for externally computed VUS-PR and PATE values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vus_pr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pate: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `series_id,auc_roc,auc_pr` rows, one per series.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["series_id", "auc_roc", "auc_pr"])?;
        for s in &self.per_series {
            w.write_record([s.series_id.clone(), s.auc_roc.to_string(), s.auc_pr.to_string()])?;
        }
        w.flush()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Unweighted mean over series.
pub fn mean_over_series(per_series: Vec<SeriesMetrics>) -> Result<EvalReport> {
    if per_series.is_empty() {
        return Err(Error::Empty("no series to average"));
    }
    let n = per_series.len() as f64;
    let mean_auc_roc = per_series.iter().map(|s| s.auc_roc).sum::<f64>() / n;
    let mean_auc_pr = per_series.iter().map(|s| s.auc_pr).sum::<f64>() / n;
    Ok(EvalReport {
        per_series,
        mean_auc_roc,
        mean_auc_pr,
        vus_pr: None,
        pate: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(scores: &[f64], labels: &[bool]) -> (f64, f64) {
        let ls = LabeledScores::new(scores, labels).unwrap();
        (auc_roc(&ls).unwrap(), auc_pr(&ls).unwrap())
    }

    #[test]
    fn perfect_separation() {
        let labels = [false, true, false, true, true];
        let scores: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        assert_eq!(metrics(&scores, &labels), (1.0, 1.0));
    }

    #[test]
    fn all_ties() {
        let labels = [false, true, false, false];
        let (roc, pr) = metrics(&[2.0; 4], &labels);
        assert_eq!(roc, 0.5);
        assert_eq!(pr, 0.25);
    }

    #[test]
    fn hand_computed_case() {
        // Descending: 0.9(+) 0.8(-) 0.7(+) 0.6(-)
        let (roc, pr) = metrics(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]);
        assert!((roc - 0.75).abs() < 1e-15);
        assert!((pr - (0.5 * 1.0 + 0.5 * (2.0 / 3.0))).abs() < 1e-15);
    }

    #[test]
    fn undefined_cases() {
        let ls = LabeledScores::new(&[1.0, 2.0], &[true, true]).unwrap();
        assert!(matches!(auc_roc(&ls), Err(Error::UndefinedMetric(_))));
        assert!(auc_pr(&ls).is_ok());
        let ls = LabeledScores::new(&[1.0, 2.0], &[false, false]).unwrap();
        assert!(matches!(auc_pr(&ls), Err(Error::UndefinedMetric(_))));
        assert!(LabeledScores::new(&[1.0], &[true, false]).is_err());
        assert!(LabeledScores::new(&[f64::NAN], &[true]).is_err());
    }

    #[test]
    fn means() {
        let one = vec![SeriesMetrics { series_id: "a".into(), auc_roc: 0.7, auc_pr: 0.2 }];
        let r = mean_over_series(one).unwrap();
        assert_eq!((r.mean_auc_roc, r.mean_auc_pr), (0.7, 0.2));
        let two = vec![
            SeriesMetrics { series_id: "a".into(), auc_roc: 0.4, auc_pr: 0.4 },
            SeriesMetrics { series_id: "b".into(), auc_roc: 0.6, auc_pr: 0.6 },
        ];
        let r = mean_over_series(two).unwrap();
        assert!((r.mean_auc_roc - 0.5).abs() < 1e-15);
        assert!(mean_over_series(vec![]).is_err());
    }

    #[test]
    fn csv_export() {
        let r = mean_over_series(vec![SeriesMetrics { series_id: "s0".into(), auc_roc: 1.0, auc_pr: 0.5 }]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "series_id,auc_roc,auc_pr\ns0,1,0.5\n");
        assert!(!r.to_json().contains("pate"));
    }
}
