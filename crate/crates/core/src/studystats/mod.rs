//! Reader-study records and their statistical battery: score/error
//! proportions with bootstrap intervals, agreement analyses, and the
//! hypothesis tests the stratified analyses use.

pub mod hypothesis;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hypothesis::{
    chi_squared, kendalls_tau, kendalls_w, kruskal_wallis, permutation_test,
    permutation_test_exact, RatingMatrix,
};

use crate::extraction::{parse_or_repair_json, ExtractError, ExtractionBackend};
use crate::metrics::{bootstrap_ci, MetricResult, MetricsError};
use crate::prompts;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("no records after filtering")]
    EmptyInput,
    #[error("missing sentence count for {0}")]
    MissingSentenceCounts(String),
    #[error("a group is empty")]
    EmptyGroup,
    #[error("need at least two groups")]
    TooFewGroups,
    #[error("length mismatch: x has {x}, y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least two observations")]
    InsufficientLength,
    #[error("incomplete rating matrix: {0}")]
    IncompleteMatrix(String),
    #[error("rating matrix has no rank variance to agree on")]
    DegenerateMatrix,
    #[error("degenerate table: {0}")]
    DegenerateTable(String),
    #[error("{study_id}/{source_name} has {got} reviews, expected exactly 3")]
    WrongReviewCount {
        study_id: String,
        source_name: String,
        got: usize,
    },
    #[error("{} invalid record(s); first: row {}: {}", .0.len(), .0[0].0, .0[0].1)]
    InvalidRecords(Vec<(usize, String)>),
    #[error("exact enumeration would need {0} assignments")]
    TooManyCombinations(u128),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Error severity as captured in the study: 1 = critical (clinically
/// significant), 2 = clinically insignificant. Serialized as the integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    Critical,
    Insignificant,
}

impl Severity {
    pub fn code(self) -> u8 {
        match self {
            Severity::Critical => 1,
            Severity::Insignificant => 2,
        }
    }
}

impl Serialize for Severity {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for Severity {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match u8::deserialize(deserializer)? {
            1 => Ok(Severity::Critical),
            2 => Ok(Severity::Insignificant),
            other => Err(serde::de::Error::custom(format!(
                "severity must be 1 or 2, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditKind {
    #[serde(rename = "modify")]
    Modify,
    #[serde(rename = "omission")]
    Omission,
}

/// One correction a reviewer made: rewriting an existing sentence or adding
/// a sentence the report omitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceEdit {
    pub kind: EditKind,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_index: Option<usize>,
    #[serde(default)]
    pub corrected_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Seniority {
    #[serde(rename = "senior")]
    Senior,
    #[serde(rename = "resident")]
    Resident,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "ai_generated")]
    AiGenerated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Original => "original",
            Source::AiGenerated => "ai_generated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cohort {
    #[serde(rename = "target")]
    Target,
    #[serde(rename = "lt")]
    Lt,
}

impl Cohort {
    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Target => "target",
            Cohort::Lt => "lt",
        }
    }
}

/// One reviewer's evaluation of one report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub study_id: String,
    pub reviewer_id: String,
    pub reviewer_seniority: Seniority,
    pub source: Source,
    pub score: u8,
    #[serde(default)]
    pub edits: Vec<SentenceEdit>,
    #[serde(default)]
    pub flagged_unreadable: bool,
    pub cohort: Cohort,
}

impl RatingRecord {
    pub fn has_critical_edit(&self) -> bool {
        self.edits.iter().any(|e| e.severity == Severity::Critical)
    }

    pub fn omission_count(&self) -> usize {
        self.edits
            .iter()
            .filter(|e| e.kind == EditKind::Omission)
            .count()
    }

    /// Distinct existing sentences touched by modify edits.
    pub fn modified_sentence_count(&self) -> usize {
        self.edits
            .iter()
            .filter(|e| e.kind == EditKind::Modify)
            .filter_map(|e| e.sentence_index)
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn sentence_error_count(&self) -> usize {
        self.modified_sentence_count()
    }

    /// Consistency issues for this record, empty when valid.
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if !(1..=3).contains(&self.score) {
            issues.push(format!("score must be 1..=3, got {}", self.score));
        }
        for (i, edit) in self.edits.iter().enumerate() {
            match edit.kind {
                EditKind::Modify if edit.sentence_index.is_none() => {
                    issues.push(format!("edit {i}: modify requires sentence_index"));
                }
                EditKind::Omission if edit.sentence_index.is_some() => {
                    issues.push(format!("edit {i}: omission forbids sentence_index"));
                }
                _ => {}
            }
        }
        match self.score {
            3 if !self.edits.is_empty() => {
                issues.push("score 3 requires no edits".to_string());
            }
            1 if !self.has_critical_edit() => {
                issues.push("score 1 requires at least one critical edit".to_string());
            }
            2 => {
                if self.edits.is_empty() {
                    issues.push("score 2 requires at least one edit".to_string());
                } else if self.has_critical_edit() {
                    issues.push("score 2 forbids critical edits".to_string());
                }
            }
            _ => {}
        }
        issues
    }
}

/// Validate a batch on ingestion; rejects with one diagnostic per violating
/// row.
pub fn validate_records(records: &[RatingRecord]) -> Result<(), StudyError> {
    let bad: Vec<(usize, String)> = records
        .iter()
        .enumerate()
        .flat_map(|(row, r)| {
            r.issues()
                .into_iter()
                .map(move |issue| (row, issue))
        })
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(StudyError::InvalidRecords(bad))
    }
}

fn readable(records: &[RatingRecord]) -> Vec<&RatingRecord> {
    records.iter().filter(|r| !r.flagged_unreadable).collect()
}

/// Proportion of records satisfying a predicate, with a percentile
/// bootstrap interval at record granularity. Unreadable-flagged records are
/// excluded.
pub fn proportion<F>(
    name: &str,
    records: &[RatingRecord],
    predicate: F,
    n_bootstrap: usize,
    seed: u64,
) -> Result<MetricResult, StudyError>
where
    F: Fn(&RatingRecord) -> bool,
{
    let usable = readable(records);
    if usable.is_empty() {
        return Err(StudyError::EmptyInput);
    }
    let values: Vec<f64> = usable.iter().map(|r| predicate(r) as u8 as f64).collect();
    let ci = crate::metrics::bootstrap_mean(&values, n_bootstrap, seed)?;
    Ok(MetricResult {
        name: name.to_string(),
        value: ci.value,
        ci_low: ci.ci_low,
        ci_high: ci.ci_high,
        n_bootstrap,
        seed,
        support: values.len(),
    })
}

/// Proportion of existing sentences untouched by any correction:
/// (total sentences - modified sentences - omissions) / total sentences.
/// Omissions subtract from the numerator but, being missing sentences, do
/// not enter the denominator. Sentence counts are keyed by (study, source).
pub fn sentence_acceptable_rate(
    name: &str,
    records: &[RatingRecord],
    sentence_counts: &HashMap<(String, Source), usize>,
    n_bootstrap: usize,
    seed: u64,
) -> Result<MetricResult, StudyError> {
    let usable = readable(records);
    if usable.is_empty() {
        return Err(StudyError::EmptyInput);
    }
    let mut totals = Vec::with_capacity(usable.len());
    let mut bad = Vec::with_capacity(usable.len());
    for record in &usable {
        let key = (record.study_id.clone(), record.source);
        let total = *sentence_counts.get(&key).ok_or_else(|| {
            StudyError::MissingSentenceCounts(format!(
                "{}/{}",
                record.study_id,
                record.source.as_str()
            ))
        })?;
        totals.push(total as f64);
        bad.push((record.modified_sentence_count() + record.omission_count()) as f64);
    }
    let ci = bootstrap_ci(
        usable.len(),
        |idxs| {
            let total: f64 = idxs.iter().map(|&i| totals[i]).sum();
            let bad: f64 = idxs.iter().map(|&i| bad[i]).sum();
            (total > 0.0).then(|| (total - bad) / total)
        },
        n_bootstrap,
        seed,
    )?
    .ok_or(StudyError::EmptyInput)?;
    Ok(MetricResult {
        name: name.to_string(),
        value: ci.value,
        ci_low: ci.ci_low,
        ci_high: ci.ci_high,
        n_bootstrap,
        seed,
        support: usable.len(),
    })
}

/// One row of the correction-agreement analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub scope: String,
    pub single_reviewer: usize,
    pub multiple_reviewers: usize,
    pub total: usize,
    pub single_pct: f64,
    pub multiple_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub rows: Vec<AgreementRow>,
}

/// How many reviewers flagged each correction item. Corrections to the same
/// sentence index count as agreement; omissions count as agreement at the
/// report level regardless of position. Requires exactly three reviews per
/// (study, source); unreadable-flagged reviews contribute no corrections
/// but still count toward the review triple.
pub fn error_agreement(records: &[RatingRecord]) -> Result<AgreementTable, StudyError> {
    let mut groups: BTreeMap<(String, Source), Vec<&RatingRecord>> = BTreeMap::new();
    for record in records {
        groups
            .entry((record.study_id.clone(), record.source))
            .or_default()
            .push(record);
    }
    // (reviewer count, source, cohort) per correction item.
    let mut items: Vec<(usize, Source, Cohort)> = Vec::new();
    for ((study_id, source), reviews) in &groups {
        if reviews.len() != 3 {
            return Err(StudyError::WrongReviewCount {
                study_id: study_id.clone(),
                source_name: source.as_str().to_string(),
                got: reviews.len(),
            });
        }
        let cohort = reviews[0].cohort;
        let mut by_sentence: BTreeMap<usize, HashSet<&str>> = BTreeMap::new();
        let mut omitters: HashSet<&str> = HashSet::new();
        for review in reviews {
            if review.flagged_unreadable {
                continue;
            }
            for edit in &review.edits {
                match edit.kind {
                    EditKind::Modify => {
                        if let Some(idx) = edit.sentence_index {
                            by_sentence
                                .entry(idx)
                                .or_default()
                                .insert(review.reviewer_id.as_str());
                        }
                    }
                    EditKind::Omission => {
                        omitters.insert(review.reviewer_id.as_str());
                    }
                }
            }
        }
        for reviewers in by_sentence.values() {
            items.push((reviewers.len(), *source, cohort));
        }
        if !omitters.is_empty() {
            items.push((omitters.len(), *source, cohort));
        }
    }

    let scope_rows = [
        ("all", None, None),
        ("original", Some(Source::Original), None),
        ("ai_generated", Some(Source::AiGenerated), None),
        ("target", None, Some(Cohort::Target)),
        ("lt", None, Some(Cohort::Lt)),
    ];
    let rows = scope_rows
        .iter()
        .map(|(scope, source, cohort)| {
            let selected: Vec<&(usize, Source, Cohort)> = items
                .iter()
                .filter(|(_, s, _)| source.map_or(true, |want| *s == want))
                .filter(|(_, _, c)| cohort.map_or(true, |want| *c == want))
                .collect();
            let single = selected.iter().filter(|(n, _, _)| *n == 1).count();
            let multiple = selected.iter().filter(|(n, _, _)| *n >= 2).count();
            let total = single + multiple;
            AgreementRow {
                scope: scope.to_string(),
                single_reviewer: single,
                multiple_reviewers: multiple,
                total,
                single_pct: if total > 0 {
                    single as f64 / total as f64
                } else {
                    0.0
                },
                multiple_pct: if total > 0 {
                    multiple as f64 / total as f64
                } else {
                    0.0
                },
            }
        })
        .collect();
    Ok(AgreementTable { rows })
}

/// Complete rating matrices per reviewer triple, for concordance analysis.
/// Items are (study, source) pairs every reviewer of the triple scored;
/// triples and items are ordered deterministically.
pub fn rating_matrices(
    records: &[RatingRecord],
    source_filter: Option<Source>,
) -> Vec<(String, RatingMatrix)> {
    let mut by_item: BTreeMap<(String, &str), Vec<&RatingRecord>> = BTreeMap::new();
    for record in records {
        if record.flagged_unreadable {
            continue;
        }
        if source_filter.is_some_and(|want| record.source != want) {
            continue;
        }
        by_item
            .entry((record.study_id.clone(), record.source.as_str()))
            .or_default()
            .push(record);
    }
    let mut by_triple: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for reviews in by_item.values() {
        if reviews.len() != 3 {
            continue;
        }
        let mut sorted: Vec<&&RatingRecord> = reviews.iter().collect();
        sorted.sort_by_key(|r| r.reviewer_id.as_str());
        let triple = sorted
            .iter()
            .map(|r| r.reviewer_id.as_str())
            .collect::<Vec<_>>()
            .join("+");
        let scores: Vec<f64> = sorted.iter().map(|r| r.score as f64).collect();
        by_triple.entry(triple).or_default().push(scores);
    }
    by_triple
        .into_iter()
        .filter(|(_, items)| items.len() >= 2)
        .filter_map(|(triple, items)| {
            // Transpose items x raters into raters x items.
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|r| items.iter().map(|item| item[r]).collect())
                .collect();
            RatingMatrix::new(rows).ok().map(|m| (triple, m))
        })
        .collect()
}

/// Error category of one correction, assigned by a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCategory {
    #[serde(rename = "pathological")]
    Pathological,
    #[serde(rename = "lines_tubes")]
    LinesTubes,
    #[serde(rename = "other")]
    Other,
}

/// Classify an error description as pathological vs. lines/tubes via the
/// classification prompt.
pub fn classify_error_category(
    description: &str,
    backend: &dyn ExtractionBackend,
) -> Result<ErrorCategory, ExtractError> {
    let raw = backend.complete(prompts::CLASSIFY_ERROR, description)?;
    let value = parse_or_repair_json(&raw)?;
    let category = value
        .get("category")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| ExtractError::MalformedResponse {
            detail: "missing \"category\"".to_string(),
            raw: raw.clone(),
        })?;
    match category {
        "pathological" => Ok(ErrorCategory::Pathological),
        "lines_tubes" => Ok(ErrorCategory::LinesTubes),
        "other" => Ok(ErrorCategory::Other),
        other => Err(ExtractError::MalformedResponse {
            detail: format!("unknown category {other:?}"),
            raw,
        }),
    }
}
