//! GitHub harvesting: pick the repositories most associated with CVEs,
//! fetch their issues, and apply the token-length filter.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{send_with_retry, HttpRequest, RetryPolicy, Transport};
use crate::nvd::{CveRecord, ReferenceLink};
use crate::util::{parse_utc, ts_seconds};

pub const GITHUB_API_BASE: &str = "https://api.github.com";
pub const DEFAULT_TOKEN_LIMIT: u64 = 8191;
pub const DEFAULT_TOP_K: usize = 31;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub repo_owner: String,
    pub repo_name: String,
    pub issue_number: u64,
    pub title: String,
    pub body: String,
    #[serde(with = "ts_seconds")]
    pub created_at: DateTime<Utc>,
    pub html_url: String,
    pub token_count: u64,
}

impl IssueRecord {
    pub fn new(
        repo_owner: impl Into<String>,
        repo_name: impl Into<String>,
        issue_number: u64,
        title: impl Into<String>,
        body: impl Into<String>,
        created_at: DateTime<Utc>,
    ) -> Self {
        let repo_owner = repo_owner.into();
        let repo_name = repo_name.into();
        let title = title.into();
        let body = body.into();
        let html_url = issue_html_url(&repo_owner, &repo_name, issue_number);
        let token_count = count_tokens(&format!("{title}\n{body}"));
        IssueRecord {
            repo_owner,
            repo_name,
            issue_number,
            title,
            body,
            created_at,
            html_url,
            token_count,
        }
    }
}

/// Canonical issue URL; `parse_issue_url` round-trips it.
pub fn issue_html_url(owner: &str, name: &str, number: u64) -> String {
    format!("https://github.com/{owner}/{name}/issues/{number}")
}

/// Parse a GitHub issue or pull-request URL into (owner, name, number).
pub fn parse_issue_url(url: &str) -> Option<(String, String, u64)> {
    let parsed = url::Url::parse(url).ok()?;
    if parsed.host_str()? != "github.com" {
        return None;
    }
    let segments: Vec<&str> = parsed.path_segments()?.collect();
    match segments.as_slice() {
        [owner, name, kind, number] if *kind == "issues" || *kind == "pull" => {
            Some((owner.to_string(), name.to_string(), number.parse().ok()?))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSelection {
    pub owner: String,
    pub name: String,
    /// Distinct CVEs referencing this repository inside the ranking window.
    pub cve_count: u64,
    /// 1-based rank; counts are non-increasing in rank.
    pub rank: u64,
}

#[derive(Debug, Default)]
pub struct Selection {
    pub repos: Vec<RepoSelection>,
    pub warning: Option<String>,
}

/// Rank repositories by the number of distinct CVEs (published inside
/// `window`) whose references point at one of their issues or PRs, and take
/// the top `k`. Ties break by owner/name ascending.
pub fn select_repositories(
    links: &[ReferenceLink],
    cves: &HashMap<String, CveRecord>,
    window: (DateTime<Utc>, DateTime<Utc>),
    k: usize,
) -> Result<Selection> {
    if k < 1 {
        return Err(Error::InvalidInput("top-k must be at least 1".into()));
    }
    let mut per_repo: BTreeMap<(String, String), BTreeSet<&str>> = BTreeMap::new();
    for link in links {
        if link.domain != "github.com" {
            continue;
        }
        let Some((owner, name, _)) = parse_issue_url(&link.url) else {
            continue;
        };
        let Some(cve) = cves.get(&link.cve_id) else {
            continue;
        };
        if cve.published < window.0 || cve.published > window.1 {
            continue;
        }
        per_repo
            .entry((owner, name))
            .or_default()
            .insert(link.cve_id.as_str());
    }

    let mut ranked: Vec<((String, String), u64)> = per_repo
        .into_iter()
        .map(|(repo, ids)| (repo, ids.len() as u64))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let warning = (ranked.len() < k).then(|| {
        format!(
            "requested top {k} repositories but only {} have CVE-linked issues in the window",
            ranked.len()
        )
    });
    let repos = ranked
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, ((owner, name), cve_count))| RepoSelection {
            owner,
            name,
            cve_count,
            rank: i as u64 + 1,
        })
        .collect();
    Ok(Selection { repos, warning })
}

/// Token counting contract. The default is a chars/4 heuristic; an exact
/// BPE tokenizer can be substituted behind this trait.
pub trait Tokenizer: Send + Sync {
    fn count_tokens(&self, text: &str) -> u64;
}

/// ceil(chars / 4), counting Unicode scalar values.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicTokenizer;

impl Tokenizer for HeuristicTokenizer {
    fn count_tokens(&self, text: &str) -> u64 {
        (text.chars().count() as u64).div_ceil(4)
    }
}

pub fn count_tokens(text: &str) -> u64 {
    HeuristicTokenizer.count_tokens(text)
}

#[derive(Debug, Default)]
pub struct TokenFilterOutcome {
    pub kept: Vec<IssueRecord>,
    pub dropped: usize,
}

/// Keep issues with `token_count <= limit` (the boundary is inclusive),
/// preserving order.
pub fn filter_by_tokens(
    issues: impl IntoIterator<Item = IssueRecord>,
    limit: u64,
) -> TokenFilterOutcome {
    let mut outcome = TokenFilterOutcome::default();
    for issue in issues {
        if issue.token_count <= limit {
            outcome.kept.push(issue);
        } else {
            outcome.dropped += 1;
        }
    }
    outcome
}

pub struct GithubClient<'a> {
    transport: &'a dyn Transport,
    base_url: String,
    token: Option<String>,
    per_page: usize,
    retry: RetryPolicy,
}

impl<'a> GithubClient<'a> {
    pub fn new(transport: &'a dyn Transport) -> Self {
        GithubClient {
            transport,
            base_url: GITHUB_API_BASE.to_string(),
            token: None,
            per_page: 100,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_base_url(mut self, base_url: impl Into<String>) -> Self {
        self.base_url = base_url.into();
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_per_page(mut self, per_page: usize) -> Self {
        self.per_page = per_page.clamp(1, 100);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn issues_url(&self, owner: &str, name: &str, page: usize) -> String {
        format!(
            "{}/repos/{owner}/{name}/issues?state=all&per_page={}&page={page}&direction=asc&sort=created",
            self.base_url, self.per_page
        )
    }

    /// Fetch every issue of `owner/name` (open and closed), ascending by
    /// issue number. Pull requests are excluded by the API's PR marker.
    pub fn fetch_issues(&self, owner: &str, name: &str) -> Result<Vec<IssueRecord>> {
        let mut issues = Vec::new();
        let mut page = 1;
        loop {
            let mut req = HttpRequest::get(self.issues_url(owner, name, page))
                .header("Accept", "application/vnd.github+json")
                .header("User-Agent", "vulnscout");
            if let Some(token) = &self.token {
                req = req.header("Authorization", format!("Bearer {token}"));
            }
            let resp = send_with_retry(self.transport, &req, &self.retry)?;
            if resp.status == 404 {
                return Err(Error::transport(
                    Some(404),
                    format!("repository {owner}/{name} not found"),
                ));
            }
            if resp.status != 200 {
                return Err(Error::transport(
                    Some(resp.status),
                    format!("fetching issues for {owner}/{name}"),
                ));
            }
            let items: Vec<serde_json::Value> = serde_json::from_str(resp.body_str()?)
                .map_err(|e| Error::Parse(format!("issues page for {owner}/{name}: {e}")))?;
            let n = items.len();
            for item in items {
                if item.get("pull_request").is_some() {
                    continue;
                }
                issues.push(parse_issue(owner, name, &item)?);
            }
            if n < self.per_page {
                break;
            }
            page += 1;
        }
        issues.sort_by_key(|i| i.issue_number);
        Ok(issues)
    }

    /// Fetch issues for several repositories with up to `concurrency` repos
    /// in flight. Results come back in the input repository order.
    pub fn fetch_issues_many(
        &self,
        repos: &[(String, String)],
        concurrency: usize,
    ) -> Vec<Result<Vec<IssueRecord>>> {
        let concurrency = concurrency.max(1);
        let mut all = Vec::with_capacity(repos.len());
        for batch in repos.chunks(concurrency) {
            let batch_results: Vec<Result<Vec<IssueRecord>>> = std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|(owner, name)| scope.spawn(move || self.fetch_issues(owner, name)))
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
            all.extend(batch_results);
        }
        all
    }
}

fn parse_issue(owner: &str, name: &str, item: &serde_json::Value) -> Result<IssueRecord> {
    let number = item
        .get("number")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse(format!("issue without number in {owner}/{name}")))?;
    let title = item
        .get("title")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    let body = item
        .get("body")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    let created_at = item
        .get("created_at")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Parse(format!("issue #{number} missing created_at")))
        .and_then(parse_utc)?;
    Ok(IssueRecord::new(owner, name, number, title, body, created_at))
}
