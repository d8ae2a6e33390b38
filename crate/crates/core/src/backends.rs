//! Embedding and chat model contracts, with HTTP implementations speaking
//! the common chat-completions/embeddings JSON shapes and deterministic
//! mocks so the full pipeline runs offline.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{send_with_retry, HttpRequest, RetryPolicy, Transport};
use crate::util::fnv1a64;

pub const NORM_TOLERANCE: f64 = 1e-6;

/// An L2-normalized embedding. Constructors reject non-finite entries, so
/// downstream cosine similarity is a plain dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalize `values` to unit L2 norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding must not be empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embedding has non-finite entries".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput("embedding has zero norm".into()));
        }
        Ok(EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidInput(format!(
                "embedding dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpEmbedding,
    HttpChat,
    MockEmbedding,
    MockChat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

impl BackendConfig {
    pub fn mock_embedding(dim: usize, seed: u64) -> Self {
        BackendConfig {
            kind: BackendKind::MockEmbedding,
            endpoint: None,
            model_name: "mock-embedding".into(),
            dim: Some(dim),
            seed: Some(seed),
            api_key: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
        }
    }

    pub fn mock_chat() -> Self {
        BackendConfig {
            kind: BackendKind::MockChat,
            endpoint: None,
            model_name: "mock-chat".into(),
            dim: None,
            seed: None,
            api_key: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BackendKind::HttpEmbedding | BackendKind::HttpChat => {
                if self.endpoint.as_deref().unwrap_or("").is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "{:?} backend requires an endpoint",
                        self.kind
                    )));
                }
            }
            BackendKind::MockEmbedding => {
                if self.dim.is_none() {
                    return Err(Error::InvalidInput(
                        "mock embedding backend requires dim".into(),
                    ));
                }
            }
            BackendKind::MockChat => {}
        }
        Ok(())
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_retries.max(1),
            ..RetryPolicy::default()
        }
    }
}

pub trait EmbeddingBackend: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

pub trait ChatBackend: Send + Sync {
    /// Complete a (system, user) exchange, returning the raw reply text.
    fn complete(&self, system: &str, user: &str) -> Result<String>;
}

fn check_embed_inputs(texts: &[String]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::InvalidInput("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(Error::InvalidInput(format!("text {i} is empty")));
    }
    Ok(())
}

fn check_chat_inputs(system: &str, user: &str) -> Result<()> {
    if system.trim().is_empty() || user.trim().is_empty() {
        return Err(Error::InvalidInput("chat prompts must be non-empty".into()));
    }
    Ok(())
}

/// Deterministic feature-hashing embedder: lowercased word unigrams plus
/// character trigrams hashed into `dim` signed buckets, then L2-normalized.
/// Texts sharing vocabulary land on shared buckets, so cosine similarity
/// tracks lexical overlap.
pub struct MockEmbedding {
    dim: usize,
    seed: u64,
}

impl MockEmbedding {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 8 {
            return Err(Error::InvalidInput("mock embedding dim must be >= 8".into()));
        }
        Ok(MockEmbedding { dim, seed })
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let lowered = text.to_lowercase();
        let mut acc = vec![0.0f64; self.dim];
        let mut bump = |token: &str| {
            let h = fnv1a64(self.seed, token.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            acc[idx] += sign;
        };
        for word in lowered.split(|c: char| !c.is_alphanumeric()) {
            if !word.is_empty() {
                bump(&format!("w:{word}"));
            }
        }
        let chars: Vec<char> = lowered.chars().collect();
        for tri in chars.windows(3) {
            bump(&format!("t:{}{}{}", tri[0], tri[1], tri[2]));
        }
        if acc.iter().all(|v| *v == 0.0) {
            acc[0] = 1.0;
        }
        EmbeddingVector::normalized(acc).expect("non-zero finite accumulator")
    }
}

impl EmbeddingBackend for MockEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_embed_inputs(texts)?;
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Trigger vocabulary for the mock chat's verdict.
const MOCK_CHAT_TRIGGERS: [&str; 5] = ["overflow", "injection", "CVE-", "use-after-free", "RCE"];

/// Deterministic chat stand-in: flags the issue iff the user prompt contains
/// a trigger word (case-insensitive) and echoes the issue title as the
/// description. Replies are always valid JSON per the reply schema.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockChat;

impl MockChat {
    fn title_of(user: &str) -> String {
        let title = user
            .lines()
            .find_map(|line| line.strip_prefix("Title: "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .or_else(|| {
                user.lines()
                    .map(str::trim)
                    .find(|l| !l.is_empty())
                    .map(str::to_string)
            })
            .unwrap_or_default();
        if title.is_empty() {
            "(untitled issue)".into()
        } else {
            title
        }
    }
}

impl ChatBackend for MockChat {
    fn complete(&self, system: &str, user: &str) -> Result<String> {
        check_chat_inputs(system, user)?;
        let lowered = user.to_lowercase();
        let detected = MOCK_CHAT_TRIGGERS
            .iter()
            .any(|t| lowered.contains(&t.to_lowercase()));
        let reply = serde_json::json!({
            "description": Self::title_of(user),
            "vulnerability_detected": detected,
        });
        Ok(reply.to_string())
    }
}

/// Embeddings over HTTP using the common embeddings JSON shape
/// (`input` array in, `data[].embedding` out). Results are re-normalized.
pub struct HttpEmbedding<'a> {
    transport: &'a dyn Transport,
    config: BackendConfig,
    retry: RetryPolicy,
}

impl<'a> HttpEmbedding<'a> {
    pub fn new(transport: &'a dyn Transport, config: BackendConfig) -> Result<Self> {
        config.validate()?;
        if config.kind != BackendKind::HttpEmbedding {
            return Err(Error::InvalidInput("config kind is not http embedding".into()));
        }
        let retry = config.retry();
        Ok(HttpEmbedding {
            transport,
            config,
            retry,
        })
    }

    #[allow(dead_code)]
    fn timeout(&self) -> Duration {
        Duration::from_secs(self.config.timeout_secs)
    }
}

impl EmbeddingBackend for HttpEmbedding<'_> {
    fn dim(&self) -> usize {
        self.config.dim.unwrap_or(0)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_embed_inputs(texts)?;
        let endpoint = self.config.endpoint.as_deref().expect("validated endpoint");
        let body = serde_json::json!({
            "model": self.config.model_name,
            "input": texts,
        });
        let mut req = HttpRequest::post_json(endpoint, body.to_string().into_bytes());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = send_with_retry(self.transport, &req, &self.retry)?;
        if resp.status != 200 {
            return Err(Error::Backend(format!(
                "embedding endpoint returned HTTP {}",
                resp.status
            )));
        }
        let parsed: serde_json::Value = serde_json::from_str(resp.body_str()?)
            .map_err(|e| Error::Backend(format!("embedding response: {e}")))?;
        let data = parsed
            .get("data")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Backend("embedding response missing data".into()))?;
        if data.len() != texts.len() {
            return Err(Error::Backend(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        let mut indexed: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (fallback_idx, entry) in data.iter().enumerate() {
            let idx = entry
                .get("index")
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .unwrap_or(fallback_idx);
            let values: Vec<f64> = entry
                .get("embedding")
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::Backend("embedding entry missing vector".into()))?
                .iter()
                .map(|v| v.as_f64().unwrap_or(f64::NAN))
                .collect();
            indexed.push((idx, values));
        }
        indexed.sort_by_key(|(idx, _)| *idx);
        let mut out = Vec::with_capacity(indexed.len());
        for (_, values) in indexed {
            if let Some(expected) = self.config.dim {
                if values.len() != expected {
                    return Err(Error::Backend(format!(
                        "embedding dimension {} does not match configured {expected}",
                        values.len()
                    )));
                }
            }
            out.push(EmbeddingVector::normalized(values).map_err(|e| Error::Backend(e.to_string()))?);
        }
        Ok(out)
    }
}

/// Chat over HTTP using the common chat-completions JSON shape, pinned to
/// temperature 0.
pub struct HttpChat<'a> {
    transport: &'a dyn Transport,
    config: BackendConfig,
    retry: RetryPolicy,
}

impl<'a> HttpChat<'a> {
    pub fn new(transport: &'a dyn Transport, config: BackendConfig) -> Result<Self> {
        config.validate()?;
        if config.kind != BackendKind::HttpChat {
            return Err(Error::InvalidInput("config kind is not http chat".into()));
        }
        let retry = config.retry();
        Ok(HttpChat {
            transport,
            config,
            retry,
        })
    }
}

impl ChatBackend for HttpChat<'_> {
    fn complete(&self, system: &str, user: &str) -> Result<String> {
        check_chat_inputs(system, user)?;
        let endpoint = self.config.endpoint.as_deref().expect("validated endpoint");
        let body = serde_json::json!({
            "model": self.config.model_name,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut req = HttpRequest::post_json(endpoint, body.to_string().into_bytes());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = send_with_retry(self.transport, &req, &self.retry)?;
        if resp.status != 200 {
            return Err(Error::Backend(format!(
                "chat endpoint returned HTTP {}",
                resp.status
            )));
        }
        let parsed: serde_json::Value = serde_json::from_str(resp.body_str()?)
            .map_err(|e| Error::Backend(format!("chat response: {e}")))?;
        let content = parsed
            .get("choices")
            .and_then(|v| v.as_array())
            .and_then(|arr| arr.first())
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|v| v.as_str())
            .unwrap_or_default();
        if content.is_empty() {
            return Err(Error::Backend("chat reply was empty".into()));
        }
        Ok(content.to_string())
    }
}

/// Build an embedding backend from config.
pub fn build_embedding_backend<'a>(
    transport: &'a dyn Transport,
    config: &BackendConfig,
) -> Result<Box<dyn EmbeddingBackend + 'a>> {
    config.validate()?;
    match config.kind {
        BackendKind::MockEmbedding => Ok(Box::new(MockEmbedding::new(
            config.dim.expect("validated dim"),
            config.seed.unwrap_or(0),
        )?)),
        BackendKind::HttpEmbedding => Ok(Box::new(HttpEmbedding::new(transport, config.clone())?)),
        _ => Err(Error::InvalidInput(format!(
            "{:?} is not an embedding backend",
            config.kind
        ))),
    }
}

/// Build a chat backend from config.
pub fn build_chat_backend<'a>(
    transport: &'a dyn Transport,
    config: &BackendConfig,
) -> Result<Box<dyn ChatBackend + 'a>> {
    config.validate()?;
    match config.kind {
        BackendKind::MockChat => Ok(Box::new(MockChat)),
        BackendKind::HttpChat => Ok(Box::new(HttpChat::new(transport, config.clone())?)),
        _ => Err(Error::InvalidInput(format!(
            "{:?} is not a chat backend",
            config.kind
        ))),
    }
}
