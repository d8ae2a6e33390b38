//! Transport seam for every HTTP interaction in the pipeline.
//!
//! All clients (NVD, GitHub, model backends) speak through [`Transport`], so
//! the whole pipeline can run against recorded responses with no network.
//! The live implementation is [`LiveTransport`]; tests and offline runs use
//! [`StubTransport`] or a directory-backed [`ReplayTransport`].

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: String,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<Vec<u8>>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest {
            method: "GET".into(),
            url: url.into(),
            headers: Vec::new(),
            body: None,
        }
    }

    pub fn post_json(url: impl Into<String>, body: Vec<u8>) -> Self {
        HttpRequest {
            method: "POST".into(),
            url: url.into(),
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: Some(body),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn ok(body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status: 200,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn with_status(status: u16, body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn header_value(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn body_str(&self) -> Result<&str> {
        std::str::from_utf8(&self.body)
            .map_err(|e| Error::Parse(format!("non-UTF-8 response body: {e}")))
    }
}

/// One round-trip. Implementations must be safe to call from several threads.
pub trait Transport: Send + Sync {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse>;
}

/// Canonical request key: method + URL with query pairs sorted and re-encoded.
/// Both stub matching and replay indexes use this so fixtures do not depend on
/// incidental percent-encoding or query order.
pub fn canonical_url(raw: &str) -> String {
    match url::Url::parse(raw) {
        Ok(mut u) => {
            let mut pairs: Vec<(String, String)> = u
                .query_pairs()
                .map(|(k, v)| (k.into_owned(), v.into_owned()))
                .collect();
            pairs.sort();
            if pairs.is_empty() {
                u.set_query(None);
            } else {
                let mut qp = u.query_pairs_mut();
                qp.clear();
                for (k, v) in &pairs {
                    qp.append_pair(k, v);
                }
                drop(qp);
            }
            u.set_fragment(None);
            u.to_string()
        }
        Err(_) => raw.to_string(),
    }
}

fn request_key(req: &HttpRequest) -> String {
    let body_tag = match &req.body {
        None => String::new(),
        Some(b) => format!("#{:016x}", crate::util::fnv1a64(0, b)),
    };
    format!("{} {}{}", req.method, canonical_url(&req.url), body_tag)
}

/// Live HTTP over `ureq`. Statuses are returned as data, never as errors, so
/// the retry layer can inspect them.
pub struct LiveTransport {
    agent: ureq::Agent,
}

impl LiveTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        LiveTransport { agent }
    }
}

impl Transport for LiveTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse> {
        let mut builder = match req.method.as_str() {
            "GET" => self.agent.get(&req.url),
            "POST" => self.agent.post(&req.url),
            other => return Err(Error::InvalidInput(format!("unsupported method {other}"))),
        };
        for (name, value) in &req.headers {
            builder = builder.header(name.as_str(), value.as_str());
        }
        let result = match &req.body {
            Some(body) => builder.send(&body[..]),
            None => builder.call(),
        };
        let mut response =
            result.map_err(|e| Error::transport(None, format!("{}: {e}", req.url)))?;
        let status = response.status().as_u16();
        let headers = response
            .headers()
            .iter()
            .filter_map(|(n, v)| Some((n.as_str().to_string(), v.to_str().ok()?.to_string())))
            .collect();
        let body = response
            .body_mut()
            .read_to_vec()
            .map_err(|e| Error::transport(Some(status), format!("reading body: {e}")))?;
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}

/// In-memory programmable transport for tests. Responses queue per request
/// key; the last response for a key sticks. Every request is logged.
#[derive(Default)]
pub struct StubTransport {
    routes: Mutex<HashMap<String, Vec<HttpResponse>>>,
    log: Mutex<Vec<HttpRequest>>,
}

impl StubTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(&self, req: &HttpRequest, response: HttpResponse) {
        self.routes
            .lock()
            .unwrap()
            .entry(request_key(req))
            .or_default()
            .push(response);
    }

    pub fn on_get(&self, url: &str, response: HttpResponse) {
        self.on(&HttpRequest::get(url), response);
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl Transport for StubTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse> {
        self.log.lock().unwrap().push(req.clone());
        let mut routes = self.routes.lock().unwrap();
        match routes.get_mut(&request_key(req)) {
            Some(queue) if !queue.is_empty() => {
                if queue.len() == 1 {
                    Ok(queue[0].clone())
                } else {
                    Ok(queue.remove(0))
                }
            }
            _ => Ok(HttpResponse::with_status(
                404,
                format!("no stub for {}", request_key(req)),
            )),
        }
    }
}

#[derive(serde::Deserialize)]
struct ReplayEntry {
    method: Option<String>,
    url: String,
    file: String,
    #[serde(default = "default_status")]
    status: u16,
}

fn default_status() -> u16 {
    200
}

/// Directory-backed transport replaying recorded responses. The directory
/// holds `index.json` (a list of `{method?, url, file, status?}` entries) and
/// the referenced body files.
pub struct ReplayTransport {
    dir: PathBuf,
    index: HashMap<String, (PathBuf, u16)>,
}

impl ReplayTransport {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let index_path = dir.join("index.json");
        let raw = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let entries: Vec<ReplayEntry> =
            serde_json::from_str(&raw).map_err(|e| Error::Parse(format!("replay index: {e}")))?;
        let mut index = HashMap::new();
        for entry in entries {
            let method = entry.method.unwrap_or_else(|| "GET".into());
            let key = format!("{} {}", method, canonical_url(&entry.url));
            index.insert(key, (dir.join(&entry.file), entry.status));
        }
        Ok(ReplayTransport { dir, index })
    }
}

impl Transport for ReplayTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse> {
        let key = request_key(req);
        let (path, status) = self.index.get(&key).ok_or_else(|| {
            Error::transport(
                None,
                format!("no recorded response for {key} in {}", self.dir.display()),
            )
        })?;
        let body = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(HttpResponse {
            status: *status,
            headers: Vec::new(),
            body,
        })
    }
}

/// 3 attempts with exponential backoff, honoring `Retry-After` when the
/// server sends one.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub max_wait: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff: Duration::from_secs(1),
            max_wait: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Zero-delay policy for tests.
    pub fn immediate() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff: Duration::ZERO,
            max_wait: Duration::ZERO,
        }
    }
}

fn retry_after(resp: &HttpResponse, cap: Duration) -> Option<Duration> {
    let secs: u64 = resp.header_value("Retry-After")?.trim().parse().ok()?;
    Some(Duration::from_secs(secs).min(cap))
}

fn is_retryable(status: u16) -> bool {
    status == 429 || status == 403 || status >= 500
}

/// Execute with retries. Returns the first 2xx/3xx/4xx (non-rate-limit)
/// response; retries transport failures, 429/403 rate limiting, and 5xx.
pub fn send_with_retry(
    transport: &dyn Transport,
    req: &HttpRequest,
    policy: &RetryPolicy,
) -> Result<HttpResponse> {
    let mut last_err: Option<Error> = None;
    for attempt in 0..policy.max_attempts {
        match transport.execute(req) {
            Ok(resp) if !is_retryable(resp.status) => return Ok(resp),
            Ok(resp) => {
                let wait = retry_after(&resp, policy.max_wait).unwrap_or_else(|| {
                    policy
                        .base_backoff
                        .checked_mul(1 << attempt)
                        .unwrap_or(policy.max_wait)
                });
                last_err = Some(Error::transport(
                    Some(resp.status),
                    format!("{} {}", req.method, req.url),
                ));
                if attempt + 1 < policy.max_attempts && !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            Err(e) => {
                last_err = Some(e);
                if attempt + 1 < policy.max_attempts && !policy.base_backoff.is_zero() {
                    std::thread::sleep(policy.base_backoff * (1 << attempt));
                }
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::transport(None, "no attempts made")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_query_order_and_fragment() {
        let a = canonical_url("https://x.test/p?b=2&a=1#frag");
        let b = canonical_url("https://x.test/p?a=1&b=2");
        assert_eq!(a, b);
    }

    #[test]
    fn stub_queues_then_sticks() {
        let stub = StubTransport::new();
        stub.on_get("https://x.test/a", HttpResponse::with_status(429, ""));
        stub.on_get("https://x.test/a", HttpResponse::ok("done"));
        let req = HttpRequest::get("https://x.test/a");
        assert_eq!(stub.execute(&req).unwrap().status, 429);
        assert_eq!(stub.execute(&req).unwrap().status, 200);
        assert_eq!(stub.execute(&req).unwrap().status, 200);
    }

    #[test]
    fn retry_recovers_after_rate_limit() {
        let stub = StubTransport::new();
        stub.on_get(
            "https://x.test/r",
            HttpResponse::with_status(429, "").header("Retry-After", "0"),
        );
        stub.on_get("https://x.test/r", HttpResponse::ok("fine"));
        let resp = send_with_retry(
            &stub,
            &HttpRequest::get("https://x.test/r"),
            &RetryPolicy::immediate(),
        )
        .unwrap();
        assert_eq!(resp.status, 200);
        assert_eq!(stub.requests().len(), 2);
    }

    #[test]
    fn retry_gives_up_with_last_status() {
        let stub = StubTransport::new();
        stub.on_get("https://x.test/down", HttpResponse::with_status(503, ""));
        let err = send_with_retry(
            &stub,
            &HttpRequest::get("https://x.test/down"),
            &RetryPolicy::immediate(),
        )
        .unwrap_err();
        match err {
            Error::Transport { status, .. } => assert_eq!(status, Some(503)),
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(stub.requests().len(), 3);
    }

    #[test]
    fn non_retryable_status_returns_immediately() {
        let stub = StubTransport::new();
        stub.on_get("https://x.test/missing", HttpResponse::with_status(404, ""));
        let resp = send_with_retry(
            &stub,
            &HttpRequest::get("https://x.test/missing"),
            &RetryPolicy::immediate(),
        )
        .unwrap();
        assert_eq!(resp.status, 404);
        assert_eq!(stub.requests().len(), 1);
    }
}
