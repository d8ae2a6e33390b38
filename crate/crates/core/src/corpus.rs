//! Corpus construction: join issues with CVE references into ground-truth
//! labels, sample negatives per repository, assign cutoff-aware splits, and
//! serialize the result as JSONL plus a sidecar manifest.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::github::IssueRecord;
use crate::nvd::{CveRecord, ReferenceLink, Severity};
use crate::util::{atomic_write, subseed, ts_seconds};

pub const DEFAULT_NEG_PER_POS: f64 = 4.19;
/// Train share of the post-cutoff remainder; 49/82 reproduces a 49%/33%
/// overall split when exclusions run at 18%.
pub const DEFAULT_TRAIN_FRACTION: f64 = 49.0 / 82.0;
pub const DEFAULT_CUTOFF: &str = "2021-09-01T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedCve {
    pub cve_id: String,
    #[serde(with = "ts_seconds")]
    pub disclosure_date: DateTime<Utc>,
    pub description: String,
    pub severity: Option<Severity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Sentinel until `assign_splits` runs.
    Unassigned,
    ExcludedPreCutoff,
    ExcludedContaminated,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledIssue {
    pub issue: IssueRecord,
    pub label: bool,
    /// Non-empty exactly when `label` is true.
    pub linked_cves: Vec<LinkedCve>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub total: usize,
    pub positives: usize,
    pub negatives: usize,
    pub unassigned: usize,
    pub excluded_pre_cutoff: usize,
    pub excluded_contaminated: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    #[serde(with = "ts_seconds")]
    pub cutoff: DateTime<Utc>,
    #[serde(with = "ts_seconds")]
    pub created: DateTime<Utc>,
}

impl CorpusManifest {
    pub fn from_corpus(
        labeled: &[LabeledIssue],
        seed: u64,
        cutoff: DateTime<Utc>,
        created: DateTime<Utc>,
    ) -> Self {
        let count = |s: Split| labeled.iter().filter(|l| l.split == s).count();
        CorpusManifest {
            total: labeled.len(),
            positives: labeled.iter().filter(|l| l.label).count(),
            negatives: labeled.iter().filter(|l| !l.label).count(),
            unassigned: count(Split::Unassigned),
            excluded_pre_cutoff: count(Split::ExcludedPreCutoff),
            excluded_contaminated: count(Split::ExcludedContaminated),
            train: count(Split::Train),
            test: count(Split::Test),
            seed,
            cutoff,
            created,
        }
    }
}

/// Links that point at an issue URL absent from the harvested issues.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OrphanReport {
    pub orphans: Vec<ReferenceLink>,
}

fn url_key(url: &str) -> String {
    url.to_lowercase()
}

/// Label each issue by whether a CVE reference cites its URL, attaching
/// every citing CVE. Splits stay `Unassigned`. Links that look like issue
/// URLs but match no harvested issue are reported, not fatal.
pub fn label_issues(
    issues: &[IssueRecord],
    links: &[ReferenceLink],
    cves: &HashMap<String, CveRecord>,
) -> (Vec<LabeledIssue>, OrphanReport) {
    let issue_keys: std::collections::HashSet<String> =
        issues.iter().map(|i| url_key(&i.html_url)).collect();

    let mut by_issue: HashMap<String, Vec<&ReferenceLink>> = HashMap::new();
    let mut report = OrphanReport::default();
    for link in links {
        if crate::github::parse_issue_url(&link.url).is_none() {
            continue;
        }
        let key = url_key(&link.url);
        if issue_keys.contains(&key) {
            by_issue.entry(key).or_default().push(link);
        } else {
            report.orphans.push(link.clone());
        }
    }

    let labeled = issues
        .iter()
        .map(|issue| {
            let mut linked: Vec<LinkedCve> = by_issue
                .get(&url_key(&issue.html_url))
                .map(|links| {
                    let mut cve_ids: Vec<&str> =
                        links.iter().map(|l| l.cve_id.as_str()).collect();
                    cve_ids.sort_unstable();
                    cve_ids.dedup();
                    cve_ids
                        .into_iter()
                        .filter_map(|id| cves.get(id))
                        .map(|cve| LinkedCve {
                            cve_id: cve.cve_id.clone(),
                            disclosure_date: cve.published,
                            description: cve.description.clone(),
                            severity: cve.severity.clone(),
                        })
                        .collect()
                })
                .unwrap_or_default();
            linked.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
            LabeledIssue {
                label: !linked.is_empty(),
                linked_cves: linked,
                issue: issue.clone(),
                split: Split::Unassigned,
            }
        })
        .collect();
    (labeled, report)
}

/// Keep all positives; per repository, keep a seeded uniform sample of
/// `round(target_neg_per_pos × positives)` negatives, clipped to
/// availability. Output preserves the input order.
pub fn sample_negatives(
    labeled: &[LabeledIssue],
    target_neg_per_pos: f64,
    seed: u64,
) -> Result<Vec<LabeledIssue>> {
    if !(target_neg_per_pos > 0.0) {
        return Err(Error::InvalidInput(
            "target_neg_per_pos must be positive".into(),
        ));
    }
    let mut per_repo: BTreeMap<(String, String), (usize, Vec<usize>)> = BTreeMap::new();
    for (idx, item) in labeled.iter().enumerate() {
        let repo = (item.issue.repo_owner.clone(), item.issue.repo_name.clone());
        let entry = per_repo.entry(repo).or_default();
        if item.label {
            entry.0 += 1;
        } else {
            entry.1.push(idx);
        }
    }

    let mut keep = vec![false; labeled.len()];
    for (idx, item) in labeled.iter().enumerate() {
        if item.label {
            keep[idx] = true;
        }
    }
    for ((owner, name), (positives, mut negative_idx)) in per_repo {
        let want = (target_neg_per_pos * positives as f64).round() as usize;
        let take = want.min(negative_idx.len());
        let mut rng =
            ChaCha8Rng::seed_from_u64(subseed(seed, &format!("negatives:{owner}/{name}")));
        negative_idx.shuffle(&mut rng);
        for &idx in negative_idx.iter().take(take) {
            keep[idx] = true;
        }
    }

    Ok(labeled
        .iter()
        .enumerate()
        .filter(|(idx, _)| keep[*idx])
        .map(|(_, item)| item.clone())
        .collect())
}

#[derive(Debug)]
pub struct SplitOutcome {
    pub labeled: Vec<LabeledIssue>,
    pub manifest: CorpusManifest,
    pub warning: Option<String>,
}

/// Assign cutoff-aware splits:
///
/// * created before the cutoff with every linked disclosure also before it
///   (vacuously true for negatives) → `ExcludedPreCutoff`;
/// * positives created before the cutoff with any disclosure at or after
///   it → `ExcludedContaminated`;
/// * everything else → a seeded stratified shuffle into `Train`/`Test` at
///   `train_fraction_of_remainder`, preserving the positive ratio.
pub fn assign_splits(
    labeled: &[LabeledIssue],
    cutoff: DateTime<Utc>,
    train_fraction_of_remainder: f64,
    seed: u64,
) -> Result<SplitOutcome> {
    if !(train_fraction_of_remainder > 0.0 && train_fraction_of_remainder < 1.0) {
        return Err(Error::InvalidInput(
            "train fraction must be inside (0, 1)".into(),
        ));
    }

    let mut out: Vec<LabeledIssue> = labeled.to_vec();
    let mut remainder_pos: Vec<usize> = Vec::new();
    let mut remainder_neg: Vec<usize> = Vec::new();
    for (idx, item) in out.iter_mut().enumerate() {
        if item.issue.created_at < cutoff {
            let contaminated = item.label
                && item
                    .linked_cves
                    .iter()
                    .any(|cve| cve.disclosure_date >= cutoff);
            item.split = if contaminated {
                Split::ExcludedContaminated
            } else {
                Split::ExcludedPreCutoff
            };
        } else if item.label {
            remainder_pos.push(idx);
        } else {
            remainder_neg.push(idx);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, "splits"));
    for stratum in [&mut remainder_pos, &mut remainder_neg] {
        stratum.shuffle(&mut rng);
        let n_train = (train_fraction_of_remainder * stratum.len() as f64).round() as usize;
        for (pos, &idx) in stratum.iter().enumerate() {
            out[idx].split = if pos < n_train { Split::Train } else { Split::Test };
        }
    }

    let warning = if !out.is_empty() {
        let min_created = out.iter().map(|l| l.issue.created_at).min().unwrap();
        let max_created = out.iter().map(|l| l.issue.created_at).max().unwrap();
        (cutoff <= min_created || cutoff > max_created).then(|| {
            format!(
                "cutoff {cutoff} falls outside the corpus creation range [{min_created}, {max_created}]"
            )
        })
    } else {
        None
    };

    let manifest = CorpusManifest::from_corpus(&out, seed, cutoff, Utc::now());
    Ok(SplitOutcome {
        labeled: out,
        manifest,
        warning,
    })
}

fn manifest_path(corpus_path: &Path) -> PathBuf {
    let mut name = corpus_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    name.push_str(".manifest.json");
    corpus_path.with_file_name(name)
}

/// Write the corpus as JSONL (one issue per line, fixed key order) with the
/// manifest as a sidecar JSON file. The manifest's counts are recomputed
/// from the data and must agree with the provided one.
pub fn write_corpus(
    labeled: &[LabeledIssue],
    manifest: &CorpusManifest,
    path: &Path,
) -> Result<CorpusManifest> {
    let recomputed = CorpusManifest::from_corpus(
        labeled,
        manifest.seed,
        manifest.cutoff,
        manifest.created,
    );
    if recomputed != *manifest {
        return Err(Error::Integrity(
            "manifest does not match the corpus contents".into(),
        ));
    }
    let mut body = String::new();
    for item in labeled {
        body.push_str(
            &serde_json::to_string(item)
                .map_err(|e| Error::Parse(format!("serializing issue: {e}")))?,
        );
        body.push('\n');
    }
    atomic_write(path, body.as_bytes())?;
    let manifest_json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Parse(format!("serializing manifest: {e}")))?;
    atomic_write(&manifest_path(path), manifest_json.as_bytes())?;
    Ok(manifest.clone())
}

/// Read a corpus and its manifest back, verifying line-level integrity and
/// the manifest/content count.
pub fn read_corpus(path: &Path) -> Result<(Vec<LabeledIssue>, CorpusManifest)> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labeled = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: LabeledIssue = serde_json::from_str(line).map_err(|e| {
            Error::Integrity(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if item.label != !item.linked_cves.is_empty() {
            return Err(Error::Integrity(format!(
                "{}:{}: label disagrees with linked CVEs",
                path.display(),
                lineno + 1
            )));
        }
        labeled.push(item);
    }

    let mpath = manifest_path(path);
    let manifest_raw = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&manifest_raw)
        .map_err(|e| Error::Integrity(format!("{}: {e}", mpath.display())))?;
    if manifest.total != labeled.len() {
        return Err(Error::Integrity(format!(
            "manifest says {} issues but {} found in {}",
            manifest.total,
            labeled.len(),
            path.display()
        )));
    }
    Ok((labeled, manifest))
}

/// Issues of one split, in corpus order.
pub fn split_issues<'a>(labeled: &'a [LabeledIssue], split: Split) -> Vec<&'a LabeledIssue> {
    labeled.iter().filter(|l| l.split == split).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::github::issue_html_url;
    use crate::nvd::CveStatus;
    use crate::util::parse_utc;

    fn issue(owner: &str, name: &str, number: u64, created: &str) -> IssueRecord {
        IssueRecord::new(
            owner,
            name,
            number,
            format!("issue {number}"),
            "body",
            parse_utc(created).unwrap(),
        )
    }

    fn cve(id: &str, published: &str) -> CveRecord {
        CveRecord {
            cve_id: id.into(),
            published: parse_utc(published).unwrap(),
            last_modified: parse_utc(published).unwrap(),
            status: CveStatus::Analyzed,
            description: format!("official description of {id}"),
            references: vec![],
            severity: Some(Severity {
                score: 7.5,
                vector: "CVSS:3.1/AV:N".into(),
            }),
        }
    }

    fn link_to(owner: &str, name: &str, number: u64, cve_id: &str) -> ReferenceLink {
        ReferenceLink {
            url: issue_html_url(owner, name, number),
            domain: "github.com".into(),
            cve_id: cve_id.into(),
        }
    }

    fn labeled(pos: bool, owner: &str, number: u64, created: &str, disclosed: &str) -> LabeledIssue {
        LabeledIssue {
            issue: issue(owner, "repo", number, created),
            label: pos,
            linked_cves: if pos {
                vec![LinkedCve {
                    cve_id: format!("CVE-2022-{number:04}"),
                    disclosure_date: parse_utc(disclosed).unwrap(),
                    description: "d".into(),
                    severity: None,
                }]
            } else {
                vec![]
            },
            split: Split::Unassigned,
        }
    }

    #[test]
    fn labels_cited_issues_with_all_citing_cves() {
        let issues = vec![
            issue("nextcloud", "server", 100, "2023-05-01T00:00:00Z"),
            issue("nextcloud", "server", 101, "2023-05-02T00:00:00Z"),
            issue("nextcloud", "server", 102, "2023-05-03T00:00:00Z"),
        ];
        let links = vec![
            link_to("nextcloud", "server", 100, "CVE-2023-48305"),
            link_to("nextcloud", "server", 102, "CVE-2023-0001"),
            link_to("nextcloud", "server", 102, "CVE-2023-0002"),
        ];
        let cves: HashMap<String, CveRecord> =
            ["CVE-2023-48305", "CVE-2023-0001", "CVE-2023-0002"]
                .iter()
                .map(|id| ((*id).to_string(), cve(id, "2023-11-01T00:00:00Z")))
                .collect();

        let (out, report) = label_issues(&issues, &links, &cves);
        assert!(report.orphans.is_empty());
        assert!(out[0].label);
        assert_eq!(out[0].linked_cves[0].cve_id, "CVE-2023-48305");
        assert!(!out[1].label);
        assert!(out[1].linked_cves.is_empty());
        assert!(out[2].label);
        assert_eq!(out[2].linked_cves.len(), 2);
        for item in &out {
            assert_eq!(item.split, Split::Unassigned);
            assert_eq!(item.label, !item.linked_cves.is_empty());
        }
    }

    #[test]
    fn unmatched_issue_links_become_orphans() {
        let issues = vec![issue("o", "r", 1, "2023-05-01T00:00:00Z")];
        let links = vec![
            link_to("o", "r", 999, "CVE-2023-0001"),
            ReferenceLink {
                url: "https://example.com/advisory".into(),
                domain: "example.com".into(),
                cve_id: "CVE-2023-0002".into(),
            },
        ];
        let cves = HashMap::new();
        let (out, report) = label_issues(&issues, &links, &cves);
        assert!(!out[0].label);
        // the non-issue URL is not an orphan, only the unmatched issue link
        assert_eq!(report.orphans.len(), 1);
        assert!(report.orphans[0].url.ends_with("/issues/999"));
    }

    #[test]
    fn sampling_keeps_positives_and_rounds_per_repo() {
        let mut corpus = Vec::new();
        for n in 0..2 {
            corpus.push(labeled(true, "acme", n, "2022-01-01T00:00:00Z", "2022-02-01T00:00:00Z"));
        }
        for n in 100..200 {
            corpus.push(labeled(false, "acme", n, "2022-01-01T00:00:00Z", ""));
        }
        let sampled = sample_negatives(&corpus, 4.0, 7).unwrap();
        assert_eq!(sampled.iter().filter(|l| l.label).count(), 2);
        assert_eq!(sampled.iter().filter(|l| !l.label).count(), 8);

        let again = sample_negatives(&corpus, 4.0, 7).unwrap();
        assert_eq!(sampled, again);
        let other_seed = sample_negatives(&corpus, 4.0, 8).unwrap();
        assert_eq!(other_seed.iter().filter(|l| !l.label).count(), 8);
    }

    #[test]
    fn sampling_clips_to_available_negatives() {
        let corpus = vec![
            labeled(true, "acme", 1, "2022-01-01T00:00:00Z", "2022-02-01T00:00:00Z"),
            labeled(false, "acme", 2, "2022-01-01T00:00:00Z", ""),
            labeled(false, "acme", 3, "2022-01-01T00:00:00Z", ""),
        ];
        let sampled = sample_negatives(&corpus, 100.0, 1).unwrap();
        assert_eq!(sampled.len(), 3);
        assert!(sample_negatives(&corpus, 0.0, 1).is_err());
    }

    #[test]
    fn split_routing_matches_the_date_rules() {
        let cutoff = parse_utc("2021-09-01T00:00:00Z").unwrap();
        let corpus = vec![
            // created and disclosed pre-cutoff
            labeled(true, "a", 1, "2021-08-01T00:00:00Z", "2021-08-15T00:00:00Z"),
            // created pre-cutoff, disclosed after: contaminated
            labeled(true, "a", 2, "2021-08-01T00:00:00Z", "2022-01-01T00:00:00Z"),
            // negative created pre-cutoff
            labeled(false, "a", 3, "2021-08-20T00:00:00Z", ""),
            // post-cutoff issues go to train/test
            labeled(true, "a", 4, "2021-10-01T00:00:00Z", "2021-12-01T00:00:00Z"),
            labeled(false, "a", 5, "2021-10-02T00:00:00Z", ""),
        ];
        let out = assign_splits(&corpus, cutoff, 0.5976, 3).unwrap();
        assert_eq!(out.labeled[0].split, Split::ExcludedPreCutoff);
        assert_eq!(out.labeled[1].split, Split::ExcludedContaminated);
        assert_eq!(out.labeled[2].split, Split::ExcludedPreCutoff);
        assert!(matches!(out.labeled[3].split, Split::Train | Split::Test));
        assert!(matches!(out.labeled[4].split, Split::Train | Split::Test));
        assert_eq!(out.manifest.excluded_pre_cutoff, 2);
        assert_eq!(out.manifest.excluded_contaminated, 1);
        assert_eq!(out.manifest.total, 5);
        // contaminated issues are positives by construction
        assert!(out
            .labeled
            .iter()
            .filter(|l| l.split == Split::ExcludedContaminated)
            .all(|l| l.label));
    }

    #[test]
    fn split_fraction_and_determinism() {
        let corpus: Vec<LabeledIssue> = (0..100)
            .map(|n| labeled(n % 10 == 0, "a", n, "2022-01-01T00:00:00Z", "2022-06-01T00:00:00Z"))
            .collect();
        let cutoff = parse_utc("2021-09-01T00:00:00Z").unwrap();
        let out = assign_splits(&corpus, cutoff, 0.6, 11).unwrap();
        assert_eq!(out.manifest.train, 60);
        assert_eq!(out.manifest.test, 40);
        let again = assign_splits(&corpus, cutoff, 0.6, 11).unwrap();
        assert_eq!(out.labeled, again.labeled);

        // all post-cutoff: warning about the cutoff being outside the range
        assert!(out.warning.is_some());

        // stratification keeps the positive ratio close in both splits
        let ratio = |split: Split| {
            let items = split_issues(&out.labeled, split);
            items.iter().filter(|l| l.label).count() as f64 / items.len() as f64
        };
        assert!((ratio(Split::Train) - ratio(Split::Test)).abs() <= 1.0 / 40.0);

        // no URL appears in both splits
        let train_urls: std::collections::HashSet<&str> = split_issues(&out.labeled, Split::Train)
            .iter()
            .map(|l| l.issue.html_url.as_str())
            .collect();
        assert!(split_issues(&out.labeled, Split::Test)
            .iter()
            .all(|l| !train_urls.contains(l.issue.html_url.as_str())));
    }

    #[test]
    fn invalid_fraction_is_rejected() {
        let corpus = vec![labeled(true, "a", 1, "2022-01-01T00:00:00Z", "2022-02-01T00:00:00Z")];
        let cutoff = parse_utc("2021-09-01T00:00:00Z").unwrap();
        assert!(assign_splits(&corpus, cutoff, 0.0, 1).is_err());
        assert!(assign_splits(&corpus, cutoff, 1.0, 1).is_err());
    }

    #[test]
    fn corpus_round_trip_is_identity() {
        let cutoff = parse_utc("2021-09-01T00:00:00Z").unwrap();
        let corpus = vec![
            labeled(true, "a", 1, "2022-01-05T10:20:30Z", "2022-02-01T00:00:00Z"),
            labeled(false, "a", 2, "2022-01-06T00:00:00Z", ""),
            labeled(false, "b", 3, "2022-01-07T23:59:59Z", ""),
        ];
        let out = assign_splits(&corpus, cutoff, 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_corpus(&out.labeled, &out.manifest, &path).unwrap();
        let (read, manifest) = read_corpus(&path).unwrap();
        assert_eq!(read, out.labeled);
        assert_eq!(manifest, out.manifest);
    }

    #[test]
    fn empty_corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let manifest = CorpusManifest::from_corpus(
            &[],
            0,
            parse_utc("2021-09-01T00:00:00Z").unwrap(),
            parse_utc("2024-01-01T00:00:00Z").unwrap(),
        );
        write_corpus(&[], &manifest, &path).unwrap();
        let (read, m) = read_corpus(&path).unwrap();
        assert!(read.is_empty());
        assert_eq!(m.total, 0);
    }

    #[test]
    fn truncated_line_is_an_integrity_error_with_line_number() {
        let cutoff = parse_utc("2021-09-01T00:00:00Z").unwrap();
        let corpus = vec![
            labeled(true, "a", 1, "2022-01-05T00:00:00Z", "2022-02-01T00:00:00Z"),
            labeled(false, "a", 2, "2022-01-06T00:00:00Z", ""),
        ];
        let out = assign_splits(&corpus, cutoff, 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_corpus(&out.labeled, &out.manifest, &path).unwrap();

        let raw = std::fs::read_to_string(&path).unwrap();
        let truncated = raw[..raw.len() - 40].to_string();
        std::fs::write(&path, truncated).unwrap();
        let err = read_corpus(&path).unwrap_err();
        match err {
            Error::Integrity(msg) => assert!(msg.contains(":2:"), "message was {msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn manifest_count_mismatch_is_detected() {
        let cutoff = parse_utc("2021-09-01T00:00:00Z").unwrap();
        let corpus = vec![
            labeled(true, "a", 1, "2022-01-05T00:00:00Z", "2022-02-01T00:00:00Z"),
            labeled(false, "a", 2, "2022-01-06T00:00:00Z", ""),
        ];
        let out = assign_splits(&corpus, cutoff, 0.5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_corpus(&out.labeled, &out.manifest, &path).unwrap();

        // drop one line; the manifest still claims two
        let raw = std::fs::read_to_string(&path).unwrap();
        let first_line = raw.lines().next().unwrap().to_string();
        std::fs::write(&path, format!("{first_line}\n")).unwrap();
        assert!(matches!(read_corpus(&path), Err(Error::Integrity(_))));
    }
}
