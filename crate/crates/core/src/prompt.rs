//! Prompt rendering and LLM reply parsing. The templates are compiled-in
//! constants checked byte-for-byte against golden files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::github::IssueRecord;

const CLASSIFICATION_SYSTEM_PROMPT: &str = "You are a cybersecurity assistant tasked with identifying potential vulnerabilities by analyzing GitHub issues. Your goal is to review each issue and determine whether it indicates a security vulnerability. Provide a detailed description of the issue and a confidence score of how much you are confident about the vulnerability.\n\nIn addition to identifying security vulnerabilities, you should also recognize cases where the issue is not a vulnerability. These may include failing tests, minor bugs, or issues related to functionality that do not present security risks.\n\nPlease format your response in JSON with the following fields. DO NOT add any additional text to the response:\n\ndescription: Describe and reason about the issue. Explain if you detect any potential vulnerability or not.\n\nvulnerability_detected: A boolean indicating whether the issue is relevant (true) or not (false). This should be based on the explanation in description.";

const DESCRIPTION_SYSTEM_PROMPT: &str = "You are a cybersecurity assistant tasked with describing and explaining GitHub issues. Your goal is to review each issue, summarizing the key details and highlighting the main problem discussed in the issue.\n\nPlease format your response in JSON with the following field. DO NOT add any additional text to the response:\n\ndescription: Describe and explain the issue, summarizing the key details and the main problem discussed.";

/// System prompt for zero-shot vulnerability classification.
pub fn classification_system_prompt() -> &'static str {
    CLASSIFICATION_SYSTEM_PROMPT
}

/// System prompt asking only for a description of the issue (the first
/// stage of the combined pipeline).
pub fn description_system_prompt() -> &'static str {
    DESCRIPTION_SYSTEM_PROMPT
}

/// Render the user prompt for an issue. The body is passed through
/// verbatim between the markers; nothing is escaped, and the parser never
/// reads these markers back.
pub fn render_issue_prompt(issue: &IssueRecord) -> String {
    format!(
        "This is a GitHub Issue.\nRepository: {}\nOwner: {}\nTitle: {}\n\n--- Start of the Body ---\n{}\n--- End of the Body ---",
        issue.repo_name, issue.repo_owner, issue.title, issue.body
    )
}

/// A parsed model reply. `vulnerability_detected` is present whenever the
/// reply was parsed with `require_label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmReply {
    pub description: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vulnerability_detected: Option<bool>,
}

impl LlmReply {
    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("description".into(), self.description.clone().into());
        if let Some(label) = self.vulnerability_detected {
            obj.insert("vulnerability_detected".into(), label.into());
        }
        serde_json::Value::Object(obj).to_string()
    }
}

fn fragment(raw: &str) -> String {
    let mut cut = raw.trim().chars().take(120).collect::<String>();
    if raw.trim().chars().count() > 120 {
        cut.push('…');
    }
    cut
}

/// Candidate JSON texts: each fenced block first (in order), then the whole
/// trimmed reply. The first candidate that parses as a JSON object wins.
fn json_candidates(raw: &str) -> Vec<String> {
    let mut candidates = Vec::new();
    let fence = regex::Regex::new(r"(?s)```(?:[jJ][sS][oO][nN])?\s*(.*?)```").unwrap();
    for cap in fence.captures_iter(raw) {
        candidates.push(cap[1].trim().to_string());
    }
    candidates.push(raw.trim().to_string());
    candidates
}

/// Parse a model reply into [`LlmReply`]. Accepts bare JSON objects and
/// JSON inside ``` / ```json fences; unknown keys are ignored. With
/// `require_label` the boolean `vulnerability_detected` field is mandatory.
pub fn parse_llm_reply(raw: &str, require_label: bool) -> Result<LlmReply> {
    let mut object = None;
    for candidate in json_candidates(raw) {
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str(&candidate) {
            object = Some(map);
            break;
        }
    }
    let object = object
        .ok_or_else(|| Error::Parse(format!("reply contains no JSON object: {:?}", fragment(raw))))?;

    let description = object
        .get("description")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            Error::Parse(format!(
                "reply is missing a string \"description\": {:?}",
                fragment(raw)
            ))
        })?
        .to_string();
    if description.trim().is_empty() {
        return Err(Error::Parse(format!(
            "reply description is empty: {:?}",
            fragment(raw)
        )));
    }

    let label = object.get("vulnerability_detected");
    let vulnerability_detected = match (require_label, label) {
        (true, Some(serde_json::Value::Bool(b))) => Some(*b),
        (true, Some(other)) => {
            return Err(Error::Parse(format!(
                "\"vulnerability_detected\" is not a boolean: {other}"
            )))
        }
        (true, None) => {
            return Err(Error::Parse(format!(
                "reply is missing \"vulnerability_detected\": {:?}",
                fragment(raw)
            )))
        }
        (false, Some(serde_json::Value::Bool(b))) => Some(*b),
        (false, _) => None,
    };

    Ok(LlmReply {
        description,
        vulnerability_detected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::parse_utc;
    use proptest::prelude::*;

    fn sample_issue(title: &str, body: &str) -> IssueRecord {
        IssueRecord::new(
            "zulip",
            "zulip",
            1,
            title,
            body,
            parse_utc("2022-03-01T12:00:00Z").unwrap(),
        )
    }

    #[test]
    fn renders_field_order_and_markers() {
        let rendered = render_issue_prompt(&sample_issue("X", "Y"));
        assert_eq!(
            rendered,
            "This is a GitHub Issue.\nRepository: zulip\nOwner: zulip\nTitle: X\n\n--- Start of the Body ---\nY\n--- End of the Body ---"
        );
        assert!(!rendered.ends_with('\n'));
    }

    #[test]
    fn renders_empty_body_with_markers_intact() {
        let rendered = render_issue_prompt(&sample_issue("X", ""));
        assert!(rendered.contains("--- Start of the Body ---\n\n--- End of the Body ---"));
    }

    #[test]
    fn body_containing_end_marker_passes_through_verbatim() {
        let body = "before\n--- End of the Body ---\nafter";
        let rendered = render_issue_prompt(&sample_issue("X", body));
        assert_eq!(rendered.matches("--- End of the Body ---").count(), 2);
        assert!(rendered.contains(body));
    }

    #[test]
    fn classification_prompt_is_stable_and_complete() {
        let text = classification_system_prompt();
        assert!(text.contains("DO NOT add any additional text"));
        assert!(text.len() > 500);
        assert_eq!(text, classification_system_prompt());
    }

    #[test]
    fn description_prompt_is_stable_and_json_only() {
        let text = description_system_prompt();
        assert!(text.contains("summariz"));
        assert!(text.contains("JSON"));
        assert_eq!(text, description_system_prompt());
    }

    #[test]
    fn parses_bare_json_reply() {
        let reply = parse_llm_reply(
            r#"{"description":"heap overflow in parser","vulnerability_detected":true}"#,
            true,
        )
        .unwrap();
        assert_eq!(reply.description, "heap overflow in parser");
        assert_eq!(reply.vulnerability_detected, Some(true));
    }

    #[test]
    fn parses_fenced_reply() {
        let raw = "```json\n{\"description\":\"d\",\"vulnerability_detected\":false}\n```";
        let reply = parse_llm_reply(raw, true).unwrap();
        assert_eq!(reply.description, "d");
        assert_eq!(reply.vulnerability_detected, Some(false));
    }

    #[test]
    fn first_parseable_fenced_block_wins() {
        let raw = "```\nnot json\n```\ntext\n```json\n{\"description\":\"second\",\"vulnerability_detected\":true}\n```";
        let reply = parse_llm_reply(raw, true).unwrap();
        assert_eq!(reply.description, "second");
    }

    #[test]
    fn prose_without_json_is_a_parse_error() {
        let err = parse_llm_reply("Sure! The issue is…", true).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn missing_or_non_boolean_label_fails_when_required() {
        assert!(parse_llm_reply(r#"{"description":"d"}"#, true).is_err());
        assert!(parse_llm_reply(r#"{"description":"d","vulnerability_detected":"yes"}"#, true).is_err());
        // without the label requirement the same replies parse
        let reply = parse_llm_reply(r#"{"description":"d"}"#, false).unwrap();
        assert_eq!(reply.vulnerability_detected, None);
    }

    #[test]
    fn empty_description_is_rejected_and_extra_keys_ignored() {
        assert!(parse_llm_reply(r#"{"description":"  ","vulnerability_detected":true}"#, true).is_err());
        let reply = parse_llm_reply(
            r#"{"description":"d","vulnerability_detected":true,"confidence":0.9}"#,
            true,
        )
        .unwrap();
        assert_eq!(reply.description, "d");
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(
            description in "[ -~]{1,80}".prop_filter("no backticks and non-blank", |s| !s.contains('`') && !s.trim().is_empty()),
            label in proptest::option::of(proptest::bool::ANY),
            fenced in proptest::bool::ANY,
        ) {
            let reply = LlmReply { description, vulnerability_detected: label };
            let mut raw = reply.to_json();
            if fenced {
                raw = format!("```json\n{raw}\n```");
            }
            let parsed = parse_llm_reply(&raw, label.is_some()).unwrap();
            prop_assert_eq!(parsed, reply);
        }
    }
}
