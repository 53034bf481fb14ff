//! Ingestion of externally computed clinical-efficacy scores so evaluation
//! output can carry the full table layout. Classifier label vectors and
//! factuality precision/recall are consumed as-is; nothing is recomputed.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{read_jsonl, JsonlError};
use crate::metrics::{bootstrap_ci, ConfusionTally, MetricResult};

/// The fourteen classifier labels, in the conventional order.
pub const CHEXPERT_LABELS: [&str; 14] = [
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
];

/// The conventional five-label subset. Configurable because published
/// subsets vary.
pub const CHEXPERT_FIVE: [&str; 5] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Pleural Effusion",
];

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("report ids do not align with the corpus: {missing} missing, {extra} extra; first few: {examples:?}")]
    IdMismatch {
        missing: usize,
        extra: usize,
        examples: Vec<String>,
    },
}

/// One line of an external score file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum ExternalScoreRecord {
    #[serde(rename = "chexbert")]
    Chexbert {
        report_id: String,
        pred_labels: Vec<u8>,
        ref_labels: Vec<u8>,
    },
    #[serde(rename = "radfact")]
    Radfact {
        report_id: String,
        logical_precision: f64,
        logical_recall: f64,
    },
}

/// Parsed external score tables, keyed by report id.
#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    chexbert: HashMap<String, (Vec<u8>, Vec<u8>)>,
    radfact: HashMap<String, (f64, f64)>,
}

impl ExternalScores {
    pub fn is_empty(&self) -> bool {
        self.chexbert.is_empty() && self.radfact.is_empty()
    }

    pub fn from_records(records: Vec<ExternalScoreRecord>) -> Result<Self, AdapterError> {
        let mut scores = ExternalScores::default();
        for record in records {
            match record {
                ExternalScoreRecord::Chexbert {
                    report_id,
                    pred_labels,
                    ref_labels,
                } => {
                    if pred_labels.len() != CHEXPERT_LABELS.len()
                        || ref_labels.len() != CHEXPERT_LABELS.len()
                    {
                        return Err(AdapterError::Schema(format!(
                            "{report_id}: label vectors must have {} entries",
                            CHEXPERT_LABELS.len()
                        )));
                    }
                    if pred_labels
                        .iter()
                        .chain(&ref_labels)
                        .any(|v| *v > 1)
                    {
                        return Err(AdapterError::Schema(format!(
                            "{report_id}: labels must be 0 or 1"
                        )));
                    }
                    if scores
                        .chexbert
                        .insert(report_id.clone(), (pred_labels, ref_labels))
                        .is_some()
                    {
                        return Err(AdapterError::Schema(format!(
                            "duplicate chexbert record for {report_id}"
                        )));
                    }
                }
                ExternalScoreRecord::Radfact {
                    report_id,
                    logical_precision,
                    logical_recall,
                } => {
                    for (what, v) in [
                        ("precision", logical_precision),
                        ("recall", logical_recall),
                    ] {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(AdapterError::Schema(format!(
                                "{report_id}: logical {what} must be in [0, 1]"
                            )));
                        }
                    }
                    if scores
                        .radfact
                        .insert(report_id.clone(), (logical_precision, logical_recall))
                        .is_some()
                    {
                        return Err(AdapterError::Schema(format!(
                            "duplicate radfact record for {report_id}"
                        )));
                    }
                }
            }
        }
        Ok(scores)
    }

    fn check_alignment<'a>(
        present: &HashMap<String, impl Sized>,
        corpus_ids: &[&'a str],
    ) -> Result<(), AdapterError> {
        let corpus: HashSet<&str> = corpus_ids.iter().copied().collect();
        let missing: Vec<&str> = corpus_ids
            .iter()
            .copied()
            .filter(|id| !present.contains_key(*id))
            .collect();
        let extra: Vec<&String> = present
            .keys()
            .filter(|id| !corpus.contains(id.as_str()))
            .collect();
        if missing.is_empty() && extra.is_empty() {
            return Ok(());
        }
        let mut examples: Vec<String> = missing
            .iter()
            .map(|s| s.to_string())
            .chain(extra.iter().map(|s| s.to_string()))
            .take(5)
            .collect();
        examples.sort();
        Err(AdapterError::IdMismatch {
            missing: missing.len(),
            extra: extra.len(),
            examples,
        })
    }

    /// Aggregate metric results over the given corpus ids, with bootstrap
    /// intervals at report granularity. The five-label subset is passed by
    /// name.
    pub fn metric_results(
        &self,
        corpus_ids: &[&str],
        five_subset: &[&str],
        n_bootstrap: usize,
        seed: u64,
    ) -> Result<Vec<MetricResult>, AdapterError> {
        let mut results = Vec::new();
        if !self.chexbert.is_empty() {
            Self::check_alignment(&self.chexbert, corpus_ids)?;
            let vectors: Vec<&(Vec<u8>, Vec<u8>)> = corpus_ids
                .iter()
                .map(|id| &self.chexbert[*id])
                .collect();
            let five_idx: Vec<usize> = five_subset
                .iter()
                .map(|name| {
                    CHEXPERT_LABELS
                        .iter()
                        .position(|l| l == name)
                        .ok_or_else(|| {
                            AdapterError::Schema(format!("unknown label {name:?} in subset"))
                        })
                })
                .collect::<Result<_, _>>()?;
            let all_idx: Vec<usize> = (0..CHEXPERT_LABELS.len()).collect();
            for (name, subset, use_macro) in [
                ("chexbert/macro_f1_14", &all_idx, true),
                ("chexbert/micro_f1_14", &all_idx, false),
                ("chexbert/macro_f1_5", &five_idx, true),
                ("chexbert/micro_f1_5", &five_idx, false),
            ] {
                let metric = |idxs: &[usize]| -> Option<f64> {
                    let mut tally: ConfusionTally<usize> = ConfusionTally::new();
                    for &i in idxs {
                        let (pred, reference) = vectors[i];
                        for &label in subset {
                            match (pred[label], reference[label]) {
                                (1, 1) => tally.add(label, 1, 0, 0),
                                (1, 0) => tally.add(label, 0, 1, 0),
                                (0, 1) => tally.add(label, 0, 0, 1),
                                _ => {}
                            }
                        }
                    }
                    if use_macro {
                        tally.macro_f1().or(Some(1.0))
                    } else {
                        tally.micro_f1().or(Some(1.0))
                    }
                };
                let ci = bootstrap_ci(corpus_ids.len(), metric, n_bootstrap, seed)
                    .map_err(|e| AdapterError::Schema(e.to_string()))?
                    .expect("defined on every resample");
                results.push(MetricResult {
                    name: name.to_string(),
                    value: ci.value,
                    ci_low: ci.ci_low,
                    ci_high: ci.ci_high,
                    n_bootstrap,
                    seed,
                    support: corpus_ids.len(),
                });
            }
        }
        if !self.radfact.is_empty() {
            Self::check_alignment(&self.radfact, corpus_ids)?;
            let pairs: Vec<(f64, f64)> = corpus_ids
                .iter()
                .map(|id| self.radfact[*id])
                .collect();
            for (name, which) in [
                ("radfact/logical_precision", 0usize),
                ("radfact/logical_recall", 1usize),
                ("radfact/logical_f1", 2usize),
            ] {
                let metric = |idxs: &[usize]| -> Option<f64> {
                    let n = idxs.len() as f64;
                    let p: f64 = idxs.iter().map(|&i| pairs[i].0).sum::<f64>() / n;
                    let r: f64 = idxs.iter().map(|&i| pairs[i].1).sum::<f64>() / n;
                    Some(match which {
                        0 => p,
                        1 => r,
                        _ => {
                            if p + r == 0.0 {
                                0.0
                            } else {
                                2.0 * p * r / (p + r)
                            }
                        }
                    })
                };
                let ci = bootstrap_ci(corpus_ids.len(), metric, n_bootstrap, seed)
                    .map_err(|e| AdapterError::Schema(e.to_string()))?
                    .expect("defined on every resample");
                results.push(MetricResult {
                    name: name.to_string(),
                    value: ci.value,
                    ci_low: ci.ci_low,
                    ci_high: ci.ci_high,
                    n_bootstrap,
                    seed,
                    support: corpus_ids.len(),
                });
            }
        }
        Ok(results)
    }
}

/// Load a JSONL file of external score records.
pub fn ingest_external_scores(path: &Path) -> Result<ExternalScores, AdapterError> {
    let records: Vec<ExternalScoreRecord> = read_jsonl(path)?;
    ExternalScores::from_records(records)
}
