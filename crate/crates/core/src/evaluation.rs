//! Per-class metrics, the recall-parameterized sensitivity analysis, and
//! description-similarity reporting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backends::{EmbeddingBackend, EmbeddingVector};
use crate::corpus::LabeledIssue;
use crate::detectors::DetectionResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tpc: u64,
    pub fpc: u64,
    pub fnc: u64,
    pub tnc: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tpc + self.fpc + self.fnc + self.tnc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassName {
    Vuln,
    NoVuln,
}

impl ClassName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassName::Vuln => "vuln",
            ClassName::NoVuln => "no_vuln",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_name: ClassName,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the corresponding denominator was zero and the metric was
    /// reported as 0 by convention.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recall_undefined: bool,
}

/// Pair detector results with ground truth by issue URL and count the
/// confusion cells.
pub fn confusion(results: &[DetectionResult], truth: &[LabeledIssue]) -> Result<ConfusionMatrix> {
    if results.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} results but {} truth issues",
            results.len(),
            truth.len()
        )));
    }
    let labels: HashMap<&str, bool> = truth
        .iter()
        .map(|t| (t.issue.html_url.as_str(), t.label))
        .collect();
    if labels.len() != truth.len() {
        return Err(Error::InvalidInput("duplicate issue URLs in truth".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for result in results {
        let Some(&actual) = labels.get(result.issue_url.as_str()) else {
            return Err(Error::InvalidInput(format!(
                "result for {} has no matching truth issue",
                result.issue_url
            )));
        };
        match (result.label, actual) {
            (true, true) => cm.tpc += 1,
            (true, false) => cm.fpc += 1,
            (false, true) => cm.fnc += 1,
            (false, false) => cm.tnc += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn metrics_for(class_name: ClassName, tp: u64, fp: u64, fn_: u64) -> ClassMetrics {
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    ClassMetrics {
        class_name,
        precision,
        recall,
        f1: f1_of(precision, recall),
        precision_undefined,
        recall_undefined,
    }
}

/// Per-class precision/recall/F1. The negative class uses the relabeled
/// matrix (its true positives are the tn cell). Zero denominators yield 0
/// with the corresponding flag set.
pub fn class_metrics(cm: &ConfusionMatrix) -> (ClassMetrics, ClassMetrics) {
    let vuln = metrics_for(ClassName::Vuln, cm.tpc, cm.fpc, cm.fnc);
    let no_vuln = metrics_for(ClassName::NoVuln, cm.tnc, cm.fnc, cm.fpc);
    (vuln, no_vuln)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityValue {
    pub precision: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
}

/// Reconstruct precision and F1 for a positive fraction `pi` from the two
/// per-class recalls, which do not depend on the class ratio:
/// `precision = π·r⁺ / (π·r⁺ + (1−π)·(1−r⁻))` and
/// `F1 = 2·precision·r⁺ / (precision + r⁺)`.
pub fn sensitivity_f1(r_pos: f64, r_neg: f64, pi: f64) -> Result<SensitivityValue> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::InvalidInput(format!(
            "positive fraction must be inside (0, 1), got {pi}"
        )));
    }
    for (name, v) in [("r_pos", r_pos), ("r_neg", r_neg)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    let tp_rate = pi * r_pos;
    let fp_rate = (1.0 - pi) * (1.0 - r_neg);
    let (precision, precision_undefined) = if tp_rate + fp_rate > 0.0 {
        (tp_rate / (tp_rate + fp_rate), false)
    } else {
        (0.0, true)
    };
    Ok(SensitivityValue {
        precision,
        f1: f1_of(precision, r_pos),
        precision_undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub pi: f64,
    pub r_pos: f64,
    pub r_neg: f64,
    pub precision: f64,
    pub f1: f64,
}

pub const DEFAULT_PI_FROM: f64 = 0.08;
pub const DEFAULT_PI_TO: f64 = 0.20;

/// Evaluate [`sensitivity_f1`] on an evenly spaced `pi` grid, endpoints
/// included.
pub fn sensitivity_curve(
    r_pos: f64,
    r_neg: f64,
    pi_from: f64,
    pi_to: f64,
    steps: usize,
) -> Result<Vec<SensitivityPoint>> {
    if steps < 2 {
        return Err(Error::InvalidInput("curve needs at least 2 steps".into()));
    }
    if !(pi_from > 0.0 && pi_from < pi_to && pi_to < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 < pi_from < pi_to < 1, got [{pi_from}, {pi_to}]"
        )));
    }
    let mut points = Vec::with_capacity(steps);
    for i in 0..steps {
        let pi = if i == steps - 1 {
            pi_to
        } else {
            pi_from + (pi_to - pi_from) * i as f64 / (steps - 1) as f64
        };
        let value = sensitivity_f1(r_pos, r_neg, pi)?;
        points.push(SensitivityPoint {
            pi,
            r_pos,
            r_neg,
            precision: value.precision,
            f1: value.f1,
        });
    }
    Ok(points)
}

/// Cosine of two embedding vectors, clamped to [-1, 1] against rounding.
/// Backends normalize, so this is the dot product.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    Ok(a.dot(b)?.clamp(-1.0, 1.0))
}

/// Embed both texts and return their cosine similarity.
pub fn description_similarity(
    generated: &str,
    official: &str,
    embedder: &dyn EmbeddingBackend,
) -> Result<f64> {
    if generated.trim().is_empty() || official.trim().is_empty() {
        return Err(Error::InvalidInput(
            "similarity needs two non-empty texts".into(),
        ));
    }
    let vectors = embedder.embed(&[generated.to_string(), official.to_string()])?;
    cosine_similarity(&vectors[0], &vectors[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub scores: Vec<f64>,
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    pub mean_defined: bool,
    /// Scores outside the configured range, clamped into the edge bins.
    pub clamped: u64,
}

/// Histogram over `range` with left-closed right-open bins (the last bin is
/// closed). Out-of-range scores are clamped into the edge bins with a
/// warning count.
pub fn similarity_histogram(
    scores: &[f64],
    n_bins: usize,
    range: (f64, f64),
) -> Result<SimilarityReport> {
    if n_bins < 1 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!(
            "bad histogram range [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            low: lo + width * i as f64,
            high: if i == n_bins - 1 { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
        })
        .collect();
    let mut clamped = 0;
    for &score in scores {
        let s = if score < lo || score > hi {
            clamped += 1;
            log::warn!("similarity score {score} outside [{lo}, {hi}], clamped");
            score.clamp(lo, hi)
        } else {
            score
        };
        let mut idx = ((s - lo) / width) as usize;
        if idx >= n_bins {
            idx = n_bins - 1;
        }
        bins[idx].count += 1;
    }
    let mean_defined = !scores.is_empty();
    let mean = if mean_defined {
        scores.iter().sum::<f64>() / scores.len() as f64
    } else {
        0.0
    };
    Ok(SimilarityReport {
        scores: scores.to_vec(),
        bins,
        mean,
        mean_defined,
        clamped,
    })
}
