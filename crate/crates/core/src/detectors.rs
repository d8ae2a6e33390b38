//! The four detection strategies over one result type: keyword baseline,
//! embedding classifier, zero-shot LLM, and the combined LLM + classifier
//! pipeline.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::backends::{ChatBackend, EmbeddingBackend};
use crate::corpus::LabeledIssue;
use crate::error::{Error, Result};
use crate::gbdt::{train, GbdtModel, GbdtParams};
use crate::github::IssueRecord;
use crate::prompt::{
    classification_system_prompt, description_system_prompt, parse_llm_reply, render_issue_prompt,
};
use crate::util::atomic_write;

pub const DEFAULT_KEYWORDS: [&str; 3] = ["vulnerability", "NVD", "security"];
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// A detector run fails when more than this share of issues error out.
pub const MAX_FAILURE_RATIO: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Baseline,
    Embedding,
    Llm,
    Combined,
}

impl DetectorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DetectorKind::Baseline => "baseline",
            DetectorKind::Embedding => "embedding",
            DetectorKind::Llm => "llm",
            DetectorKind::Combined => "combined",
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(DetectorKind::Baseline),
            "embedding" => Ok(DetectorKind::Embedding),
            "llm" => Ok(DetectorKind::Llm),
            "combined" => Ok(DetectorKind::Combined),
            other => Err(Error::InvalidInput(format!("unknown detector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub detector: DetectorKind,
    pub issue_url: String,
    pub label: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl DetectionResult {
    /// Per-detector field invariants: the baseline carries neither score nor
    /// description, classifiers carry a score, LLM-backed detectors carry a
    /// description.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.detector {
            DetectorKind::Baseline => self.score.is_none() && self.description.is_none(),
            DetectorKind::Embedding => self.score.is_some() && self.description.is_none(),
            DetectorKind::Llm => self.score.is_none() && self.description.is_some(),
            DetectorKind::Combined => self.score.is_some() && self.description.is_some(),
        };
        if !ok {
            return Err(Error::Detector(format!(
                "result fields violate the {:?} contract for {}",
                self.detector, self.issue_url
            )));
        }
        if let Some(score) = self.score {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Detector(format!("score {score} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

fn cve_mention_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"CVE-\d{4}-\d{4,}").unwrap())
}

/// Keyword/regex baseline: flag the issue when title+body matches the CVE id
/// pattern or contains any keyword, case-insensitively. Matching is
/// substring-based ("Security" and "insecurity" both trigger); pass
/// `word_boundary` to require whole words instead.
pub fn baseline_classify_with(
    issue: &IssueRecord,
    keywords: &[String],
    word_boundary: bool,
) -> DetectionResult {
    let text = format!("{}\n{}", issue.title, issue.body);
    let mut label = cve_mention_regex().is_match(&text);
    if !label {
        if word_boundary {
            label = keywords.iter().any(|k| {
                regex::RegexBuilder::new(&format!(r"\b{}\b", regex::escape(k)))
                    .case_insensitive(true)
                    .build()
                    .map(|re| re.is_match(&text))
                    .unwrap_or(false)
            });
        } else {
            let lowered = text.to_lowercase();
            label = keywords.iter().any(|k| lowered.contains(&k.to_lowercase()));
        }
    }
    DetectionResult {
        detector: DetectorKind::Baseline,
        issue_url: issue.html_url.clone(),
        label,
        score: None,
        description: None,
    }
}

pub fn baseline_classify(issue: &IssueRecord, keywords: &[String]) -> DetectionResult {
    baseline_classify_with(issue, keywords, false)
}

pub fn default_keywords() -> Vec<String> {
    DEFAULT_KEYWORDS.iter().map(|k| k.to_string()).collect()
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!(
            "threshold must be inside (0, 1), got {threshold}"
        )));
    }
    Ok(())
}

/// Embed the rendered issue prompt and threshold the classifier probability.
pub fn embedding_classify(
    issue: &IssueRecord,
    embedder: &dyn EmbeddingBackend,
    model: &GbdtModel,
    threshold: f64,
) -> Result<DetectionResult> {
    check_threshold(threshold)?;
    let text = render_issue_prompt(issue);
    let vectors = embedder.embed(&[text])?;
    let features = vec![vectors[0].values().to_vec()];
    let prob = model.predict_proba(&features)?[0];
    Ok(DetectionResult {
        detector: DetectorKind::Embedding,
        issue_url: issue.html_url.clone(),
        label: prob >= threshold,
        score: Some(prob),
        description: None,
    })
}

fn complete_and_parse(
    chat: &dyn ChatBackend,
    system: &str,
    user: &str,
    require_label: bool,
) -> Result<crate::prompt::LlmReply> {
    let first = chat.complete(system, user)?;
    match parse_llm_reply(&first, require_label) {
        Ok(reply) => Ok(reply),
        // one reprompt retry before giving up on this issue
        Err(_) => {
            let second = chat.complete(system, user)?;
            parse_llm_reply(&second, require_label)
                .map_err(|e| Error::Detector(format!("unparseable reply after retry: {e}")))
        }
    }
}

/// Zero-shot LLM classification: the label and description both come from
/// the model's JSON reply.
pub fn llm_classify(issue: &IssueRecord, chat: &dyn ChatBackend) -> Result<DetectionResult> {
    let reply = complete_and_parse(
        chat,
        classification_system_prompt(),
        &render_issue_prompt(issue),
        true,
    )?;
    Ok(DetectionResult {
        detector: DetectorKind::Llm,
        issue_url: issue.html_url.clone(),
        label: reply.vulnerability_detected.expect("label required"),
        score: None,
        description: Some(reply.description),
    })
}

/// Ask the chat backend to describe the issue (first stage of the combined
/// pipeline). No fallback: a failed description fails the issue.
pub fn describe_issue(chat: &dyn ChatBackend, issue: &IssueRecord) -> Result<String> {
    let reply = complete_and_parse(
        chat,
        description_system_prompt(),
        &render_issue_prompt(issue),
        false,
    )?;
    Ok(reply.description)
}

/// Combined pipeline: LLM describes the issue, the classifier labels the
/// embedded description. Label from the classifier, description from the
/// LLM, score is the classifier probability.
pub fn combined_classify(
    issue: &IssueRecord,
    chat: &dyn ChatBackend,
    embedder: &dyn EmbeddingBackend,
    model: &GbdtModel,
    threshold: f64,
) -> Result<DetectionResult> {
    check_threshold(threshold)?;
    let description = describe_issue(chat, issue)?;
    let vectors = embedder.embed(&[description.clone()])?;
    let features = vec![vectors[0].values().to_vec()];
    let prob = model.predict_proba(&features)?[0];
    Ok(DetectionResult {
        detector: DetectorKind::Combined,
        issue_url: issue.html_url.clone(),
        label: prob >= threshold,
        score: Some(prob),
        description: Some(description),
    })
}

pub enum Detector<'a> {
    Baseline {
        keywords: Vec<String>,
        word_boundary: bool,
    },
    Embedding {
        embedder: &'a dyn EmbeddingBackend,
        model: &'a GbdtModel,
        threshold: f64,
    },
    Llm {
        chat: &'a dyn ChatBackend,
    },
    Combined {
        chat: &'a dyn ChatBackend,
        embedder: &'a dyn EmbeddingBackend,
        model: &'a GbdtModel,
        threshold: f64,
    },
}

impl Detector<'_> {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Baseline { .. } => DetectorKind::Baseline,
            Detector::Embedding { .. } => DetectorKind::Embedding,
            Detector::Llm { .. } => DetectorKind::Llm,
            Detector::Combined { .. } => DetectorKind::Combined,
        }
    }

    pub fn detect(&self, issue: &IssueRecord) -> Result<DetectionResult> {
        match self {
            Detector::Baseline {
                keywords,
                word_boundary,
            } => Ok(baseline_classify_with(issue, keywords, *word_boundary)),
            Detector::Embedding {
                embedder,
                model,
                threshold,
            } => embedding_classify(issue, *embedder, model, *threshold),
            Detector::Llm { chat } => llm_classify(issue, *chat),
            Detector::Combined {
                chat,
                embedder,
                model,
                threshold,
            } => combined_classify(issue, *chat, *embedder, model, *threshold),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorFailure {
    pub issue_url: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct DetectorRun {
    /// Results in corpus order (failed issues omitted).
    pub results: Vec<DetectionResult>,
    pub failures: Vec<DetectorFailure>,
}

/// Run a detector over a split, preserving corpus order. Per-issue errors
/// are recorded rather than fatal, but a run with more than
/// [`MAX_FAILURE_RATIO`] failures is marked failed.
pub fn run_detector(detector: &Detector<'_>, issues: &[&IssueRecord]) -> Result<DetectorRun> {
    if issues.is_empty() {
        return Err(Error::InvalidInput("detector run over an empty split".into()));
    }
    let mut run = DetectorRun::default();
    for issue in issues {
        match detector.detect(issue) {
            Ok(result) => {
                result.validate()?;
                run.results.push(result);
            }
            Err(e) => run.failures.push(DetectorFailure {
                issue_url: issue.html_url.clone(),
                error: e.to_string(),
            }),
        }
    }
    if run.failures.len() as f64 > MAX_FAILURE_RATIO * issues.len() as f64 {
        return Err(Error::Detector(format!(
            "{} of {} issues failed, above the {:.0}% limit",
            run.failures.len(),
            issues.len(),
            MAX_FAILURE_RATIO * 100.0
        )));
    }
    Ok(run)
}

/// Embed the rendered prompts of labeled issues into classifier features.
pub fn issue_prompt_features(
    issues: &[&LabeledIssue],
    embedder: &dyn EmbeddingBackend,
) -> Result<Vec<Vec<f64>>> {
    let texts: Vec<String> = issues
        .iter()
        .map(|l| render_issue_prompt(&l.issue))
        .collect();
    Ok(embedder
        .embed(&texts)?
        .into_iter()
        .map(|v| v.values().to_vec())
        .collect())
}

/// Train the embedding-detector classifier on raw-issue prompt embeddings.
pub fn train_embedding_model(
    train_split: &[&LabeledIssue],
    embedder: &dyn EmbeddingBackend,
    params: &GbdtParams,
) -> Result<GbdtModel> {
    let features = issue_prompt_features(train_split, embedder)?;
    let labels: Vec<bool> = train_split.iter().map(|l| l.label).collect();
    train(&features, &labels, params)
}

/// Train the combined-detector classifier on embeddings of LLM descriptions
/// of the training issues, matching what the detector sees at inference.
pub fn train_combined_model(
    train_split: &[&LabeledIssue],
    chat: &dyn ChatBackend,
    embedder: &dyn EmbeddingBackend,
    params: &GbdtParams,
) -> Result<GbdtModel> {
    let mut descriptions = Vec::with_capacity(train_split.len());
    for item in train_split {
        descriptions.push(describe_issue(chat, &item.issue)?);
    }
    let features: Vec<Vec<f64>> = embedder
        .embed(&descriptions)?
        .into_iter()
        .map(|v| v.values().to_vec())
        .collect();
    let labels: Vec<bool> = train_split.iter().map(|l| l.label).collect();
    train(&features, &labels, params)
}

/// Results as JSONL, one line per issue, fixed key order.
pub fn write_results(results: &[DetectionResult], path: &Path) -> Result<()> {
    let mut body = String::new();
    for result in results {
        body.push_str(
            &serde_json::to_string(result)
                .map_err(|e| Error::Parse(format!("serializing result: {e}")))?,
        );
        body.push('\n');
    }
    atomic_write(path, body.as_bytes())
}

pub fn read_results(path: &Path) -> Result<Vec<DetectionResult>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut results = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let result: DetectionResult = serde_json::from_str(line)
            .map_err(|e| Error::Integrity(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        result.validate()?;
        results.push(result);
    }
    Ok(results)
}
