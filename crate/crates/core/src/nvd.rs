//! NVD CVE ingestion: windowed fetch over the v2.0 JSON API, validity
//! filtering, and extraction of the reference-URL → CVE-ID mapping that
//! seeds repository selection and ground-truth labeling.

use std::collections::HashSet;
use std::sync::OnceLock;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{send_with_retry, HttpRequest, RetryPolicy, Transport};
use crate::util::{parse_utc, ts_seconds};

pub const NVD_API_BASE: &str = "https://services.nvd.nist.gov/rest/json/cves/2.0";

/// NVD caps a published-date window at 120 days per request.
const MAX_WINDOW_DAYS: i64 = 120;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CveStatus {
    Analyzed,
    Modified,
    UnderExamination,
    Rejected,
    Other(String),
}

impl CveStatus {
    /// Map the API's `vulnStatus` strings. "Awaiting Analysis" and
    /// "Undergoing Analysis" both count as under examination; anything
    /// unrecognized is kept as `Other`.
    pub fn from_api(raw: &str) -> Self {
        match raw {
            "Analyzed" => CveStatus::Analyzed,
            "Modified" => CveStatus::Modified,
            "Rejected" => CveStatus::Rejected,
            "Awaiting Analysis" | "Undergoing Analysis" => CveStatus::UnderExamination,
            other => CveStatus::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Severity {
    /// CVSS base score in [0, 10].
    pub score: f64,
    pub vector: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: String,
    #[serde(with = "ts_seconds")]
    pub published: DateTime<Utc>,
    #[serde(with = "ts_seconds")]
    pub last_modified: DateTime<Utc>,
    pub status: CveStatus,
    pub description: String,
    /// Reference URLs, deduplicated by their normalized form.
    pub references: Vec<String>,
    pub severity: Option<Severity>,
}

/// One external reference tied back to its CVE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLink {
    /// Normalized URL: lowercased scheme and host, fragment stripped,
    /// query kept.
    pub url: String,
    /// Host component of `url`, lowercased.
    pub domain: String,
    pub cve_id: String,
}

/// A record that could not be ingested, with the reason it was skipped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipEntry {
    pub cve_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct FetchOutcome {
    /// Valid records in ascending published order (ties by CVE id).
    pub records: Vec<CveRecord>,
    pub skipped: Vec<SkipEntry>,
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub kept: Vec<CveRecord>,
    pub dropped: usize,
}

pub fn cve_id_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap())
}

/// Normalize a reference URL: lowercase scheme+host, strip the fragment,
/// keep the query. Only http/https URLs are accepted.
pub fn normalize_url(raw: &str) -> Option<String> {
    let mut parsed = url::Url::parse(raw.trim()).ok()?;
    if parsed.scheme() != "http" && parsed.scheme() != "https" {
        return None;
    }
    parsed.host_str()?;
    parsed.set_fragment(None);
    Some(parsed.to_string())
}

pub struct NvdClient<'a> {
    transport: &'a dyn Transport,
    base_url: String,
    api_key: Option<String>,
    page_size: usize,
    retry: RetryPolicy,
    max_concurrent_pages: usize,
}

impl<'a> NvdClient<'a> {
    pub fn new(transport: &'a dyn Transport) -> Self {
        NvdClient {
            transport,
            base_url: NVD_API_BASE.to_string(),
            api_key: None,
            page_size: 2000,
            retry: RetryPolicy::default(),
            max_concurrent_pages: 4,
        }
    }

    pub fn with_base_url(mut self, base_url: impl Into<String>) -> Self {
        self.base_url = base_url.into();
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_concurrent_pages(mut self, n: usize) -> Self {
        self.max_concurrent_pages = n.max(1);
        self
    }

    fn page_url(&self, chunk_start: NaiveDate, chunk_end: NaiveDate, start_index: usize) -> String {
        let mut u = url::Url::parse(&self.base_url).expect("valid NVD base URL");
        u.query_pairs_mut()
            .append_pair("resultsPerPage", &self.page_size.to_string())
            .append_pair("startIndex", &start_index.to_string())
            .append_pair(
                "pubStartDate",
                &format!("{}T00:00:00.000", chunk_start.format("%Y-%m-%d")),
            )
            .append_pair(
                "pubEndDate",
                &format!("{}T23:59:59.999", chunk_end.format("%Y-%m-%d")),
            );
        u.to_string()
    }

    fn fetch_page(&self, url: &str) -> Result<serde_json::Value> {
        let mut req = HttpRequest::get(url);
        if let Some(key) = &self.api_key {
            req = req.header("apiKey", key.clone());
        }
        let resp = send_with_retry(self.transport, &req, &self.retry)?;
        if resp.status != 200 {
            return Err(Error::transport(
                Some(resp.status),
                format!("NVD request failed: {url}"),
            ));
        }
        serde_json::from_str(resp.body_str()?)
            .map_err(|e| Error::Parse(format!("NVD page {url}: {e}")))
    }

    /// Fetch every CVE published in `[start, end]` (whole days, UTC).
    ///
    /// Windows wider than the API's 120-day cap are split into chunks;
    /// within a chunk pagination is followed to exhaustion, fetching up to
    /// `max_concurrent_pages` pages in flight. Records that fail per-record
    /// validation land in the skip report instead of aborting the stream.
    pub fn fetch_cve_window(&self, start: NaiveDate, end: NaiveDate) -> Result<FetchOutcome> {
        if start > end {
            return Err(Error::InvalidInput(format!(
                "window start {start} is after end {end}"
            )));
        }
        let mut outcome = FetchOutcome::default();
        let mut chunk_start = start;
        while chunk_start <= end {
            let chunk_end = (chunk_start + chrono::Duration::days(MAX_WINDOW_DAYS - 1)).min(end);
            self.fetch_chunk(chunk_start, chunk_end, &mut outcome)?;
            chunk_start = chunk_end + chrono::Duration::days(1);
        }
        outcome
            .records
            .sort_by(|a, b| (a.published, &a.cve_id).cmp(&(b.published, &b.cve_id)));
        let mut seen = HashSet::new();
        outcome.records.retain(|r| seen.insert(r.cve_id.clone()));
        Ok(outcome)
    }

    fn fetch_chunk(
        &self,
        chunk_start: NaiveDate,
        chunk_end: NaiveDate,
        outcome: &mut FetchOutcome,
    ) -> Result<()> {
        let first = self.fetch_page(&self.page_url(chunk_start, chunk_end, 0))?;
        let total = first
            .get("totalResults")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse("NVD page missing totalResults".into()))? as usize;
        collect_page(&first, outcome);

        let mut next_indexes: Vec<usize> = Vec::new();
        let mut idx = self.page_size;
        while idx < total {
            next_indexes.push(idx);
            idx += self.page_size;
        }
        for batch in next_indexes.chunks(self.max_concurrent_pages) {
            let pages: Vec<Result<serde_json::Value>> = std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&start_index| {
                        let url = self.page_url(chunk_start, chunk_end, start_index);
                        scope.spawn(move || self.fetch_page(&url))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
            for page in pages {
                collect_page(&page?, outcome);
            }
        }
        Ok(())
    }
}

fn collect_page(page: &serde_json::Value, outcome: &mut FetchOutcome) {
    let Some(vulns) = page.get("vulnerabilities").and_then(|v| v.as_array()) else {
        return;
    };
    for wrapper in vulns {
        match parse_cve(wrapper) {
            Ok(record) => outcome.records.push(record),
            Err(skip) => outcome.skipped.push(skip),
        }
    }
}

fn parse_cve(wrapper: &serde_json::Value) -> std::result::Result<CveRecord, SkipEntry> {
    let cve = wrapper.get("cve").unwrap_or(wrapper);
    let id = cve.get("id").and_then(|v| v.as_str()).unwrap_or_default();
    let skip = |reason: String| SkipEntry {
        cve_id: if id.is_empty() {
            None
        } else {
            Some(id.to_string())
        },
        reason,
    };

    if !cve_id_regex().is_match(id) {
        return Err(skip(format!("malformed CVE id {id:?}")));
    }
    let published = cve
        .get("published")
        .and_then(|v| v.as_str())
        .ok_or_else(|| skip("missing published date".into()))
        .and_then(|s| parse_utc(s).map_err(|e| skip(e.to_string())))?;
    let last_modified = cve
        .get("lastModified")
        .and_then(|v| v.as_str())
        .ok_or_else(|| skip("missing lastModified date".into()))
        .and_then(|s| parse_utc(s).map_err(|e| skip(e.to_string())))?;
    if published > last_modified {
        return Err(skip(format!(
            "published {published} is after lastModified {last_modified}"
        )));
    }
    let status = cve
        .get("vulnStatus")
        .and_then(|v| v.as_str())
        .map(CveStatus::from_api)
        .unwrap_or(CveStatus::Other(String::new()));

    let description = cve
        .get("descriptions")
        .and_then(|v| v.as_array())
        .and_then(|descs| {
            descs
                .iter()
                .find(|d| d.get("lang").and_then(|l| l.as_str()) == Some("en"))
                .or_else(|| descs.first())
        })
        .and_then(|d| d.get("value"))
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();

    let mut references = Vec::new();
    let mut seen = HashSet::new();
    if let Some(refs) = cve.get("references").and_then(|v| v.as_array()) {
        for r in refs {
            if let Some(raw) = r.get("url").and_then(|v| v.as_str()) {
                let key = normalize_url(raw).unwrap_or_else(|| raw.to_string());
                if seen.insert(key) {
                    references.push(raw.to_string());
                }
            }
        }
    }

    let severity = cve
        .get("metrics")
        .and_then(|m| {
            m.get("cvssMetricV31")
                .or_else(|| m.get("cvssMetricV30"))
                .or_else(|| m.get("cvssMetricV2"))
        })
        .and_then(|v| v.as_array())
        .and_then(|arr| arr.first())
        .and_then(|entry| entry.get("cvssData"))
        .and_then(|data| {
            let score = data.get("baseScore")?.as_f64()?;
            let vector = data.get("vectorString")?.as_str()?.to_string();
            (0.0..=10.0).contains(&score).then_some(Severity { score, vector })
        });

    Ok(CveRecord {
        cve_id: id.to_string(),
        published,
        last_modified,
        status,
        description,
        references,
        severity,
    })
}

/// Drop records that are under examination or rejected, preserving order.
pub fn filter_valid(records: impl IntoIterator<Item = CveRecord>) -> FilterOutcome {
    let mut outcome = FilterOutcome::default();
    for record in records {
        match record.status {
            CveStatus::UnderExamination | CveStatus::Rejected => outcome.dropped += 1,
            _ => outcome.kept.push(record),
        }
    }
    outcome
}

/// One [`ReferenceLink`] per unique normalized reference URL of `record`.
/// URLs that do not parse as http/https are skipped and reported back.
pub fn extract_references(record: &CveRecord) -> (Vec<ReferenceLink>, Vec<String>) {
    let mut links = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for raw in &record.references {
        let Some(normalized) = normalize_url(raw) else {
            warnings.push(format!("{}: unparseable reference {raw:?}", record.cve_id));
            continue;
        };
        if !seen.insert(normalized.clone()) {
            continue;
        }
        let domain = url::Url::parse(&normalized)
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_default();
        links.push(ReferenceLink {
            url: normalized,
            domain,
            cve_id: record.cve_id.clone(),
        });
    }
    (links, warnings)
}

/// Domains ranked by reference count, descending; ties broken by domain name.
pub fn rank_domains(links: &[ReferenceLink]) -> Vec<(String, u64)> {
    let mut counts = std::collections::BTreeMap::new();
    for link in links {
        *counts.entry(link.domain.clone()).or_insert(0u64) += 1;
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{HttpResponse, StubTransport};
    use proptest::prelude::*;
    use serde_json::json;

    fn record(id: &str, status: CveStatus) -> CveRecord {
        CveRecord {
            cve_id: id.to_string(),
            published: parse_utc("2022-01-01T00:00:00Z").unwrap(),
            last_modified: parse_utc("2022-01-02T00:00:00Z").unwrap(),
            status,
            description: "d".into(),
            references: vec![],
            severity: None,
        }
    }

    fn api_cve(id: &str, published: &str, status: &str, refs: &[&str]) -> serde_json::Value {
        json!({
            "cve": {
                "id": id,
                "published": published,
                "lastModified": "2024-07-01T00:00:00.000",
                "vulnStatus": status,
                "descriptions": [{"lang": "en", "value": format!("description of {id}")}],
                "references": refs.iter().map(|u| json!({"url": u})).collect::<Vec<_>>(),
                "metrics": {"cvssMetricV31": [{"cvssData": {"baseScore": 7.5, "vectorString": "CVSS:3.1/AV:N"}}]}
            }
        })
    }

    fn page(total: u64, items: Vec<serde_json::Value>) -> HttpResponse {
        HttpResponse::ok(
            json!({"totalResults": total, "format": "NVD_CVE", "vulnerabilities": items})
                .to_string(),
        )
    }

    fn stub_three_pages(stub: &StubTransport, client: &NvdClient<'_>) {
        let window = (
            NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2022, 3, 1).unwrap(),
        );
        let items: Vec<serde_json::Value> = (0..6)
            .map(|i| {
                api_cve(
                    &format!("CVE-2022-100{i}"),
                    &format!("2022-01-0{}T10:00:00.000", i + 1),
                    "Analyzed",
                    &[],
                )
            })
            .collect();
        for p in 0..3 {
            stub.on_get(
                &client.page_url(window.0, window.1, p * 2),
                page(6, items[p * 2..p * 2 + 2].to_vec()),
            );
        }
    }

    #[test]
    fn paginates_to_exhaustion_in_date_order() {
        let stub = StubTransport::new();
        let client = NvdClient::new(&stub)
            .with_page_size(2)
            .with_retry(RetryPolicy::immediate());
        stub_three_pages(&stub, &client);

        let out = client
            .fetch_cve_window(
                NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2022, 3, 1).unwrap(),
            )
            .unwrap();
        assert_eq!(out.records.len(), 6);
        assert!(out.skipped.is_empty());
        let ids: Vec<&str> = out.records.iter().map(|r| r.cve_id.as_str()).collect();
        assert_eq!(
            ids,
            vec![
                "CVE-2022-1000",
                "CVE-2022-1001",
                "CVE-2022-1002",
                "CVE-2022-1003",
                "CVE-2022-1004",
                "CVE-2022-1005"
            ]
        );
        assert!(out.records.windows(2).all(|w| w[0].published <= w[1].published));
    }

    #[test]
    fn fetch_is_deterministic_across_runs() {
        let stub = StubTransport::new();
        let client = NvdClient::new(&stub)
            .with_page_size(2)
            .with_retry(RetryPolicy::immediate());
        stub_three_pages(&stub, &client);
        let window = (
            NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2022, 3, 1).unwrap(),
        );
        let a = client.fetch_cve_window(window.0, window.1).unwrap();
        let b = client.fetch_cve_window(window.0, window.1).unwrap();
        assert_eq!(
            serde_json::to_string(&a.records).unwrap(),
            serde_json::to_string(&b.records).unwrap()
        );
    }

    #[test]
    fn empty_window_yields_empty_stream() {
        let stub = StubTransport::new();
        let client = NvdClient::new(&stub).with_retry(RetryPolicy::immediate());
        let day = NaiveDate::from_ymd_opt(2022, 6, 1).unwrap();
        stub.on_get(&client.page_url(day, day, 0), page(0, vec![]));
        let out = client.fetch_cve_window(day, day).unwrap();
        assert!(out.records.is_empty());
        assert!(out.skipped.is_empty());
    }

    #[test]
    fn malformed_records_go_to_skip_report() {
        let stub = StubTransport::new();
        let client = NvdClient::new(&stub).with_retry(RetryPolicy::immediate());
        let day = NaiveDate::from_ymd_opt(2022, 6, 1).unwrap();
        let bad_id = api_cve("NOT-A-CVE", "2022-06-01T00:00:00.000", "Analyzed", &[]);
        let good = api_cve("CVE-2022-9999", "2022-06-01T00:00:00.000", "Analyzed", &[]);
        stub.on_get(&client.page_url(day, day, 0), page(2, vec![bad_id, good]));
        let out = client.fetch_cve_window(day, day).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.skipped.len(), 1);
        assert!(out.skipped[0].reason.contains("malformed CVE id"));
    }

    #[test]
    fn inverted_window_is_rejected() {
        let stub = StubTransport::new();
        let client = NvdClient::new(&stub);
        let err = client
            .fetch_cve_window(
                NaiveDate::from_ymd_opt(2022, 2, 1).unwrap(),
                NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            )
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn filter_valid_drops_examination_and_rejected() {
        let input = vec![
            record("CVE-2022-0001", CveStatus::Analyzed),
            record("CVE-2022-0002", CveStatus::Rejected),
            record("CVE-2022-0003", CveStatus::UnderExamination),
            record("CVE-2022-0004", CveStatus::Modified),
        ];
        let out = filter_valid(input);
        let ids: Vec<&str> = out.kept.iter().map(|r| r.cve_id.as_str()).collect();
        assert_eq!(ids, vec!["CVE-2022-0001", "CVE-2022-0004"]);
        assert_eq!(out.dropped, 2);
    }

    #[test]
    fn filter_valid_keeps_all_analyzed_and_empty_input() {
        let input: Vec<CveRecord> = (0..5)
            .map(|i| record(&format!("CVE-2022-000{i}"), CveStatus::Analyzed))
            .collect();
        let out = filter_valid(input.clone());
        assert_eq!(out.kept.len(), 5);
        assert_eq!(out.dropped, 0);

        let empty = filter_valid(Vec::new());
        assert!(empty.kept.is_empty());
        assert_eq!(empty.dropped, 0);
    }

    #[test]
    fn filter_valid_is_idempotent() {
        let input = vec![
            record("CVE-2022-0001", CveStatus::Analyzed),
            record("CVE-2022-0002", CveStatus::Rejected),
            record("CVE-2022-0003", CveStatus::Other("Deferred".into())),
        ];
        let once = filter_valid(input);
        let twice = filter_valid(once.kept.clone());
        assert_eq!(once.kept, twice.kept);
        assert_eq!(twice.dropped, 0);
    }

    #[test]
    fn extract_references_normalizes_and_dedupes() {
        let mut r = record("CVE-2023-48305", CveStatus::Analyzed);
        r.references = vec![
            "https://github.com/o/r/issues/5".into(),
            "https://github.com/o/r/issues/5#comment".into(),
        ];
        let (links, warnings) = extract_references(&r);
        assert_eq!(links.len(), 1);
        assert!(warnings.is_empty());
        assert_eq!(links[0].url, "https://github.com/o/r/issues/5");
        assert_eq!(links[0].domain, "github.com");
        assert_eq!(links[0].cve_id, "CVE-2023-48305");
    }

    #[test]
    fn extract_references_skips_non_http_schemes() {
        let mut r = record("CVE-2022-0001", CveStatus::Analyzed);
        r.references = vec![
            "https://example.com/advisory".into(),
            "mailto:security@example.com".into(),
        ];
        let (links, warnings) = extract_references(&r);
        assert_eq!(links.len(), 1);
        assert_eq!(warnings.len(), 1);
        assert_eq!(links[0].domain, "example.com");
    }

    #[test]
    fn extract_references_empty() {
        let r = record("CVE-2022-0001", CveStatus::Analyzed);
        let (links, warnings) = extract_references(&r);
        assert!(links.is_empty());
        assert!(warnings.is_empty());
    }

    #[test]
    fn normalize_lowercases_scheme_and_host_only() {
        assert_eq!(
            normalize_url("HTTPS://GitHub.com/Owner/Repo/issues/5?x=1#frag").unwrap(),
            "https://github.com/Owner/Repo/issues/5?x=1"
        );
        assert_eq!(normalize_url("ftp://example.com/x"), None);
        assert_eq!(normalize_url("not a url"), None);
    }

    #[test]
    fn rank_domains_orders_by_count_then_name() {
        let mk = |domain: &str, n: usize| -> Vec<ReferenceLink> {
            (0..n)
                .map(|i| ReferenceLink {
                    url: format!("https://{domain}/{i}"),
                    domain: domain.into(),
                    cve_id: format!("CVE-2022-{:04}", i + 1000),
                })
                .collect()
        };
        let mut links = mk("a.com", 2);
        links.extend(mk("b.com", 1));
        assert_eq!(
            rank_domains(&links),
            vec![("a.com".to_string(), 2), ("b.com".to_string(), 1)]
        );
        links.extend(mk("c.com", 2));
        let ranked = rank_domains(&links);
        assert_eq!(ranked[0].0, "a.com");
        assert_eq!(ranked[1].0, "c.com");
        assert!(rank_domains(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn rank_domain_counts_sum_to_link_count(domains in proptest::collection::vec(0u8..6, 0..60)) {
            let links: Vec<ReferenceLink> = domains
                .iter()
                .enumerate()
                .map(|(i, d)| ReferenceLink {
                    url: format!("https://d{d}.com/p{i}"),
                    domain: format!("d{d}.com"),
                    cve_id: format!("CVE-2022-{:04}", 1000 + i),
                })
                .collect();
            let ranked = rank_domains(&links);
            let total: u64 = ranked.iter().map(|(_, c)| c).sum();
            prop_assert_eq!(total, links.len() as u64);
            for w in ranked.windows(2) {
                prop_assert!(w[0].1 >= w[1].1);
            }
        }
    }
}
