//! Report-text preprocessing: backend-driven section cleaning, merging of
//! impression content into findings, and short-report normalization.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::extraction::{parse_or_repair_json, BackendError, ExtractError, ExtractionBackend};
use crate::prompts;

/// Which cleaning prompt a report goes through, by EHR era.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Era {
    #[serde(rename = "pre_epic")]
    PreEpic,
    #[serde(rename = "post_epic")]
    PostEpic,
}

impl Era {
    pub fn prompt(self) -> &'static str {
        match self {
            Era::PreEpic => prompts::CLEAN_PRE_EPIC,
            Era::PostEpic => prompts::CLEAN_POST_EPIC,
        }
    }
}

/// A cleaned radiology report split into sections. Absent sections are
/// empty strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionedReport {
    pub report_id: String,
    pub indication: String,
    pub exam_type: String,
    pub comparison: String,
    pub findings: String,
    pub impression: String,
    #[serde(default)]
    pub previous_study_dates: Vec<String>,
    #[serde(default)]
    pub critical_finding: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub historically_loaded: Option<bool>,
}

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("raw report text is empty")]
    EmptyInput,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("malformed cleaning response ({detail})")]
    MalformedResponse { detail: String, raw: String },
}

impl From<ExtractError> for PrepError {
    fn from(err: ExtractError) -> Self {
        match err {
            ExtractError::Backend(b) => PrepError::Backend(b),
            ExtractError::MalformedResponse { detail, raw } => {
                PrepError::MalformedResponse { detail, raw }
            }
            other => PrepError::MalformedResponse {
                detail: other.to_string(),
                raw: String::new(),
            },
        }
    }
}

fn section_text(obj: &Value, key: &str) -> Result<String, PrepError> {
    let cleaned_key = format!("{key}_cleaned");
    let value = obj.get(&cleaned_key).or_else(|| obj.get(key));
    match value {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Null) | None => Err(PrepError::MalformedResponse {
            detail: format!("missing required section key {key:?}"),
            raw: obj.to_string(),
        }),
        Some(other) => Err(PrepError::MalformedResponse {
            detail: format!("section {key:?} is not a string"),
            raw: other.to_string(),
        }),
    }
}

fn flag(obj: &Value, key: &str) -> Option<bool> {
    match obj.get(key) {
        Some(Value::Bool(b)) => Some(*b),
        Some(Value::String(s)) => match s.to_lowercase().as_str() {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// Clean one raw report into sections via the era's prompt.
pub fn clean_report(
    report_id: &str,
    raw_text: &str,
    era: Era,
    backend: &dyn ExtractionBackend,
) -> Result<SectionedReport, PrepError> {
    if raw_text.trim().is_empty() {
        return Err(PrepError::EmptyInput);
    }
    let response = backend.complete(era.prompt(), raw_text)?;
    let value = parse_or_repair_json(&response)?;
    let obj = value.as_object().ok_or_else(|| PrepError::MalformedResponse {
        detail: "cleaning response is not a JSON object".to_string(),
        raw: response.clone(),
    })?;
    let value = Value::Object(obj.clone());
    let previous_study_dates = value
        .get("previous_study_dates")
        .and_then(Value::as_array)
        .map(|arr| {
            arr.iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    Ok(SectionedReport {
        report_id: report_id.to_string(),
        indication: section_text(&value, "indication")?,
        exam_type: section_text(&value, "exam_type")?,
        comparison: section_text(&value, "comparison")?,
        findings: section_text(&value, "findings")?,
        impression: section_text(&value, "impression")?,
        previous_study_dates,
        critical_finding: flag(&value, "critical_finding").unwrap_or(false),
        historically_loaded: flag(&value, "historically_loaded"),
    })
}

/// Append the impression's novel content to the findings.
///
/// The merge prompt returns content of its "Findings" block that its
/// "Impression" block does not cover, formatted for appending; passing our
/// sections swapped into those slots makes the returned text exactly the
/// impression content the findings are missing.
pub fn merge_impression_into_findings(
    report: &SectionedReport,
    backend: &dyn ExtractionBackend,
) -> Result<String, PrepError> {
    let user = format!(
        "Findings:\n{}\n\nImpression:\n{}",
        report.impression, report.findings
    );
    let addition = backend.complete(prompts::MERGE_SECTIONS, &user)?;
    let addition = addition.trim();
    if addition.is_empty() {
        return Ok(report.findings.clone());
    }
    if report.findings.trim().is_empty() {
        return Ok(addition.to_string());
    }
    Ok(format!("{} {}", report.findings.trim_end(), addition))
}

/// The template a short normal-negative findings text is replaced with.
pub const NORMAL_TEMPLATE: &str =
    "The lungs are clear. Normal cardiomediastinal silhouette. No pneumothorax or pleural effusion.";

/// Outcome of short-report normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShortReportOutcome {
    /// Informative text, kept unchanged.
    Keep(String),
    /// Short normal-negative text, replaced by [`NORMAL_TEMPLATE`].
    Templated(String),
    /// Non-informative text, dropped from the corpus.
    Filtered,
}

/// Lexicons behind [`normalize_short_report`]. The defaults come from the
/// editable assets shipped with the crate.
#[derive(Debug, Clone)]
pub struct NormalizeConfig {
    pub lexicon: HashSet<String>,
    pub filter_phrases: Vec<String>,
}

/// Tokens that mark a short report as explicitly negative or normal; at
/// least one must be present for templating to apply, so a terse positive
/// finding is never rewritten.
const ANCHOR_TOKENS: [&str; 9] = [
    "no",
    "not",
    "none",
    "clear",
    "normal",
    "unremarkable",
    "negative",
    "wnl",
    "without",
];

impl Default for NormalizeConfig {
    fn default() -> Self {
        let lexicon = include_str!("../assets/normal_lexicon.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        let filter_phrases = include_str!("../assets/filter_phrases.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Self {
            lexicon,
            filter_phrases,
        }
    }
}

fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|w| {
            let cleaned: String = w
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(|c| c.to_lowercase())
                .collect();
            (!cleaned.is_empty()).then_some(cleaned)
        })
        .collect()
}

/// Normalize a short findings text with the default lexicons.
pub fn normalize_short_report(findings: &str) -> ShortReportOutcome {
    normalize_short_report_with(findings, &NormalizeConfig::default())
}

/// Normalize a short findings text: blocklisted non-informative texts are
/// filtered; texts of at most four words, all in the normal-negative
/// lexicon and at least one an anchor, are templated; everything else is
/// kept unchanged.
pub fn normalize_short_report_with(
    findings: &str,
    config: &NormalizeConfig,
) -> ShortReportOutcome {
    let tokens = normalize_tokens(findings);
    let joined = tokens.join(" ");
    if config.filter_phrases.iter().any(|p| *p == joined) {
        return ShortReportOutcome::Filtered;
    }
    if !tokens.is_empty()
        && tokens.len() <= 4
        && tokens.iter().all(|t| config.lexicon.contains(t))
        && tokens.iter().any(|t| ANCHOR_TOKENS.contains(&t.as_str()))
    {
        return ShortReportOutcome::Templated(NORMAL_TEMPLATE.to_string());
    }
    ShortReportOutcome::Keep(findings.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::RuleBasedBackend;

    fn sectioned(findings: &str, impression: &str) -> SectionedReport {
        SectionedReport {
            report_id: "r1".to_string(),
            indication: String::new(),
            exam_type: String::new(),
            comparison: String::new(),
            findings: findings.to_string(),
            impression: impression.to_string(),
            previous_study_dates: Vec::new(),
            critical_finding: false,
            historically_loaded: None,
        }
    }

    #[test]
    fn clean_report_masks_dates() {
        let backend = RuleBasedBackend::new();
        let report = clean_report(
            "r1",
            "IMPRESSION: clear lungs. 2011-02-21",
            Era::PostEpic,
            &backend,
        )
        .unwrap();
        assert_eq!(report.impression, "clear lungs. _");
    }

    #[test]
    fn clean_report_untagged_text_becomes_impression() {
        let backend = RuleBasedBackend::new();
        let report = clean_report(
            "r1",
            "Stable appearance of the sternotomy.",
            Era::PreEpic,
            &backend,
        )
        .unwrap();
        assert_eq!(report.impression, "Stable appearance of the sternotomy.");
        assert_eq!(report.findings, "");
        assert_eq!(report.historically_loaded, Some(false));
    }

    #[test]
    fn clean_report_keeps_clean_sections() {
        let backend = RuleBasedBackend::new();
        let raw = "EXAMINATION: Chest PA and lateral. INDICATION: Cough. \
                   COMPARISON: None. FINDINGS: The lungs are clear. \
                   IMPRESSION: No acute disease.";
        let report = clean_report("r1", raw, Era::PostEpic, &backend).unwrap();
        assert_eq!(report.exam_type, "Chest PA and lateral.");
        assert_eq!(report.indication, "Cough.");
        assert_eq!(report.comparison, "None.");
        assert_eq!(report.findings, "The lungs are clear.");
        assert_eq!(report.impression, "No acute disease.");
    }

    #[test]
    fn clean_report_rejects_empty_input() {
        let backend = RuleBasedBackend::new();
        assert!(matches!(
            clean_report("r1", "  ", Era::PreEpic, &backend),
            Err(PrepError::EmptyInput)
        ));
    }

    #[test]
    fn cleaned_sections_never_carry_date_tokens() {
        let backend = RuleBasedBackend::new();
        let raw = "IMPRESSION: Improved since Nov 11, 2013 at 07:09 am. \
                   FINDINGS: Compared with 2011-02-21, stable. COMPARISON: July 2007.";
        let report = clean_report("r1", raw, Era::PostEpic, &backend).unwrap();
        let date = regex::Regex::new(r"\d{4}-\d{2}-\d{2}|\d{1,2}:\d{2}|(?:19|20)\d{2}").unwrap();
        for section in [&report.impression, &report.findings, &report.comparison] {
            assert!(!date.is_match(section), "{section:?}");
        }
        assert_eq!(report.previous_study_dates, vec!["July 2007".to_string()]);
    }

    #[test]
    fn merge_keeps_findings_when_nothing_novel() {
        let backend = RuleBasedBackend::new();
        let report = sectioned("No effusion.", "No effusion.");
        let merged = merge_impression_into_findings(&report, &backend).unwrap();
        assert_eq!(merged, "No effusion.");
    }

    #[test]
    fn merge_uses_impression_when_findings_empty() {
        let backend = RuleBasedBackend::new();
        let report = sectioned("", "Clear lungs.");
        let merged = merge_impression_into_findings(&report, &backend).unwrap();
        assert_eq!(merged, "Clear lungs.");
    }

    #[test]
    fn merge_continues_numbered_lists() {
        let backend = RuleBasedBackend::new();
        let report = sectioned(
            "1. No effusion. 2. Clear lungs.",
            "1. No effusion. 2. Clear lungs. 3. Small hiatal hernia.",
        );
        let merged = merge_impression_into_findings(&report, &backend).unwrap();
        assert_eq!(
            merged,
            "1. No effusion. 2. Clear lungs. 3. Small hiatal hernia."
        );
    }

    #[test]
    fn merge_output_starts_with_findings() {
        let backend = RuleBasedBackend::new();
        let report = sectioned("Left chest tube unchanged.", "New small right effusion.");
        let merged = merge_impression_into_findings(&report, &backend).unwrap();
        assert!(merged.starts_with("Left chest tube unchanged."));
        assert!(merged.contains("New small right effusion."));
    }

    #[test]
    fn short_report_rules() {
        assert_eq!(normalize_short_report("stable exam"), ShortReportOutcome::Filtered);
        assert_eq!(normalize_short_report("Stable exam."), ShortReportOutcome::Filtered);
        assert_eq!(normalize_short_report("no change"), ShortReportOutcome::Filtered);
        assert_eq!(
            normalize_short_report("Clear lungs."),
            ShortReportOutcome::Templated(NORMAL_TEMPLATE.to_string())
        );
        assert_eq!(
            normalize_short_report("No acute disease."),
            ShortReportOutcome::Templated(NORMAL_TEMPLATE.to_string())
        );
        // A four-word positive finding stays untouched.
        assert_eq!(
            normalize_short_report("Large right pleural effusion."),
            ShortReportOutcome::Keep("Large right pleural effusion.".to_string())
        );
        // No anchor token, no template.
        assert_eq!(
            normalize_short_report("Lungs chest heart silhouette."),
            ShortReportOutcome::Keep("Lungs chest heart silhouette.".to_string())
        );
        let long = "The lungs remain hyperinflated with coarse interstitial markings \
                    and scattered calcified granulomas throughout both lungs.";
        assert_eq!(
            normalize_short_report(long),
            ShortReportOutcome::Keep(long.to_string())
        );
    }

    #[test]
    fn normalization_is_idempotent_on_its_template() {
        match normalize_short_report(NORMAL_TEMPLATE) {
            ShortReportOutcome::Keep(text) => assert_eq!(text, NORMAL_TEMPLATE),
            ShortReportOutcome::Templated(text) => assert_eq!(text, NORMAL_TEMPLATE),
            ShortReportOutcome::Filtered => panic!("template must not be filtered"),
        }
    }
}
