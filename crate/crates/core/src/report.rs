//! Report serialization: metrics tables (CSV/JSON), sensitivity curves, and
//! similarity histograms. Pure string builders so output bytes are
//! deterministic.

use serde::{Deserialize, Serialize};

use crate::evaluation::{ClassMetrics, ConfusionMatrix, SensitivityPoint, SimilarityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub detector: String,
    pub confusion: ConfusionMatrix,
    pub no_vuln: ClassMetrics,
    pub vuln: ClassMetrics,
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

/// Two rows per detector (negative class first), mirroring the usual
/// model/class/precision/recall/F1 comparison table.
pub fn metrics_csv(reports: &[DetectorReport]) -> String {
    let mut out = String::from("model,class,precision,recall,f1\n");
    for report in reports {
        for metrics in [&report.no_vuln, &report.vuln] {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                report.detector,
                metrics.class_name.as_str(),
                num(metrics.precision),
                num(metrics.recall),
                num(metrics.f1),
            ));
        }
    }
    out
}

pub fn metrics_json(reports: &[DetectorReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

/// Sensitivity curve rows; `train_pi` marks the training-ratio row.
pub fn sensitivity_csv(points: &[SensitivityPoint], train_pi: Option<f64>) -> String {
    let mut out = String::from("pi,r_pos,r_neg,precision,f1,train_ratio\n");
    for p in points {
        let marked = train_pi.map_or(false, |t| (p.pi - t).abs() < 1e-9);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            num(p.pi),
            num(p.r_pos),
            num(p.r_neg),
            num(p.precision),
            num(p.f1),
            marked,
        ));
    }
    out
}

pub fn histogram_csv(report: &SimilarityReport) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    for bin in &report.bins {
        out.push_str(&format!("{},{},{}\n", num(bin.low), num(bin.high), bin.count));
    }
    out
}

/// Per-issue similarity scores.
pub fn scores_csv(pairs: &[(String, f64)]) -> String {
    let mut out = String::from("issue_url,score\n");
    for (url, score) in pairs {
        out.push_str(&format!("{url},{}\n", num(*score)));
    }
    out
}
