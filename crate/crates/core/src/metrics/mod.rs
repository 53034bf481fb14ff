//! The structured-report metric suite: instance matching, F1 metrics,
//! count-bucket accuracy, ROUGE-L, and percentile-bootstrap confidence
//! intervals, aggregated over a corpus of aligned report pairs.

pub mod bootstrap;
pub mod f1;
pub mod matching;
pub mod rouge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bootstrap::{bootstrap_ci, bootstrap_mean, quantile, stream_rng, BootstrapCi};
pub use f1::{
    change_f1, counts_accuracy, incorrect_placement_f1, placement_f1, side_f1, type_f1,
    ConfusionTally, CountsAccuracy, F1Pair,
};
pub use matching::{match_instances, MatchResult, MatchedPair};
pub use rouge::rouge_l;

use crate::schema::{count_bucket, CountBucket, LTType, PlacementLabel, StructuredLTReport};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no matched pairs")]
    NoMatchedPairs,
    #[error("no pair has incorrect placement on either side")]
    NoIncorrectSupport,
    #[error("report ids do not align: {0} prediction id(s) unmatched, {1} reference id(s) unmatched; first few: {2:?}")]
    IdMismatch(usize, usize, Vec<String>),
    #[error("duplicate report id {0:?}")]
    DuplicateReportId(String),
    #[error("expected {expected} report texts, got {got}")]
    TextLengthMismatch { expected: usize, got: usize },
}

/// A named metric value with its bootstrap interval and sample metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_bootstrap: usize,
    pub seed: u64,
    pub support: usize,
}

/// A metric that is undefined on this corpus, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsentMetric {
    pub name: String,
    pub reason: String,
}

/// The full metric battery for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricResult>,
    pub absent: Vec<AbsentMetric>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<&MetricResult> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn is_absent(&self, name: &str) -> bool {
        self.absent.iter().any(|a| a.name == name)
    }

    /// Aligned human-readable table. With `percent` the values render as
    /// x100 with one decimal; absent metrics render as `---`.
    pub fn render_table(&self, percent: bool) -> String {
        let fmt = |v: f64| {
            if percent {
                format!("{:.1}", v * 100.0)
            } else {
                format!("{v:.4}")
            }
        };
        let width = self
            .metrics
            .iter()
            .map(|m| m.name.len())
            .chain(self.absent.iter().map(|a| a.name.len()))
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = String::new();
        out.push_str(&format!(
            "{:width$}  {:>8}  {:>19}  {:>8}\n",
            "metric", "value", "95% CI", "support"
        ));
        for m in &self.metrics {
            out.push_str(&format!(
                "{:width$}  {:>8}  [{:>8}, {:>8}]  {:>8}\n",
                m.name,
                fmt(m.value),
                fmt(m.ci_low),
                fmt(m.ci_high),
                m.support
            ));
        }
        for a in &self.absent {
            out.push_str(&format!(
                "{:width$}  {:>8}  {:>19}  {:>8}\n",
                a.name, "---", "", ""
            ));
        }
        out
    }
}

/// Bootstrap settings for [`evaluate_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_bootstrap: 500,
            seed: 0,
        }
    }
}

/// Pair predictions with references by report id, in reference order.
pub fn align_corpora<'a>(
    preds: &'a [StructuredLTReport],
    refs: &'a [StructuredLTReport],
) -> Result<Vec<(&'a StructuredLTReport, &'a StructuredLTReport)>, MetricsError> {
    let mut by_id = std::collections::HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(p.report_id(), p).is_some() {
            return Err(MetricsError::DuplicateReportId(p.report_id().to_string()));
        }
    }
    let mut seen_ref = std::collections::HashSet::with_capacity(refs.len());
    for r in refs {
        if !seen_ref.insert(r.report_id()) {
            return Err(MetricsError::DuplicateReportId(r.report_id().to_string()));
        }
    }
    let mut aligned = Vec::with_capacity(refs.len());
    let mut missing_pred = Vec::new();
    for r in refs {
        match by_id.remove(r.report_id()) {
            Some(p) => aligned.push((p, r)),
            None => missing_pred.push(r.report_id().to_string()),
        }
    }
    let unmatched_pred: Vec<String> = by_id.keys().map(|s| s.to_string()).collect();
    if !missing_pred.is_empty() || !unmatched_pred.is_empty() {
        let mut examples: Vec<String> = missing_pred
            .iter()
            .chain(unmatched_pred.iter())
            .take(5)
            .cloned()
            .collect();
        examples.sort();
        return Err(MetricsError::IdMismatch(
            unmatched_pred.len(),
            missing_pred.len(),
            examples,
        ));
    }
    Ok(aligned)
}

/// Per-report precomputation shared by all metrics and their resamples.
struct ReportEval {
    type_tp: [usize; 9],
    type_fp: [usize; 9],
    type_fn: [usize; 9],
    match_result: MatchResult,
    pred_bucket: CountBucket,
    ref_bucket: CountBucket,
    instance_total: usize,
    rouge: Option<f64>,
}

fn build_eval(
    pred: &StructuredLTReport,
    reference: &StructuredLTReport,
    texts: Option<&(String, String)>,
) -> ReportEval {
    let (type_tp, type_fp, type_fn) = f1::type_confusion(pred, reference);
    ReportEval {
        type_tp,
        type_fp,
        type_fn,
        match_result: match_instances(pred, reference),
        pred_bucket: count_bucket(pred.len()),
        ref_bucket: count_bucket(reference.len()),
        instance_total: pred.len() + reference.len(),
        rouge: texts.map(|(p, r)| rouge_l(p, r)),
    }
}

fn type_scores(evals: &[ReportEval], idxs: &[usize]) -> (f64, f64) {
    let mut tally: ConfusionTally<LTType> = ConfusionTally::new();
    for &i in idxs {
        let e = &evals[i];
        for (k, lt_type) in LTType::ALL.iter().enumerate() {
            tally.add(*lt_type, e.type_tp[k], e.type_fp[k], e.type_fn[k]);
        }
    }
    // No device anywhere means nothing to disagree on.
    (
        tally.macro_f1().unwrap_or(1.0),
        tally.micro_f1().unwrap_or(1.0),
    )
}

fn pair_scores<K, P>(evals: &[ReportEval], idxs: &[usize], project: P) -> Option<(f64, f64)>
where
    K: Ord + Clone,
    P: Fn(&MatchedPair) -> (K, K),
{
    let mut tally: ConfusionTally<K> = ConfusionTally::new();
    let mut any = false;
    for &i in idxs {
        for pair in &evals[i].match_result.pairs {
            any = true;
            let (p, r) = project(pair);
            tally.observe(p, r);
        }
    }
    any.then(|| (tally.macro_f1().unwrap(), tally.micro_f1().unwrap()))
}

fn incorrect_scores(evals: &[ReportEval], idxs: &[usize]) -> Option<(f64, f64)> {
    let mut results: Vec<MatchResult> = Vec::new();
    for &i in idxs {
        results.push(evals[i].match_result.clone());
    }
    match incorrect_placement_f1(&results) {
        Ok(pair) => Some((pair.macro_f1, pair.micro_f1)),
        Err(_) => None,
    }
}

fn counts_scores(evals: &[ReportEval], idxs: &[usize]) -> Option<CountsAccuracy> {
    let buckets: Vec<(CountBucket, CountBucket)> = idxs
        .iter()
        .map(|&i| (evals[i].pred_bucket, evals[i].ref_bucket))
        .collect();
    f1::counts_accuracy_from_buckets(&buckets)
}

/// Run the full metric battery over aligned (prediction, reference) pairs.
///
/// `texts`, when provided, must align index-for-index with `pairs` and
/// contributes ROUGE-L over the (prediction text, reference text) columns.
pub fn evaluate_corpus(
    pairs: &[(&StructuredLTReport, &StructuredLTReport)],
    texts: Option<&[(String, String)]>,
    config: &EvalConfig,
) -> Result<MetricReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if let Some(texts) = texts {
        if texts.len() != pairs.len() {
            return Err(MetricsError::TextLengthMismatch {
                expected: pairs.len(),
                got: texts.len(),
            });
        }
    }
    let evals: Vec<ReportEval> = pairs
        .iter()
        .enumerate()
        .map(|(i, (p, r))| build_eval(p, r, texts.map(|t| &t[i])))
        .collect();
    let n = evals.len();
    let total_pairs: usize = evals.iter().map(|e| e.match_result.pairs.len()).sum();
    let total_instances: usize = evals.iter().map(|e| e.instance_total).sum();
    let incorrect_support: usize = evals
        .iter()
        .flat_map(|e| e.match_result.pairs.iter())
        .filter(|p| {
            p.pred_placement == PlacementLabel::Incorrect
                || p.ref_placement == PlacementLabel::Incorrect
        })
        .count();

    let mut metrics: Vec<MetricResult> = Vec::new();
    let mut absent: Vec<AbsentMetric> = Vec::new();
    let push = |name: &str,
                    support: usize,
                    metric: &dyn Fn(&[usize]) -> Option<f64>,
                    metrics: &mut Vec<MetricResult>,
                    absent: &mut Vec<AbsentMetric>,
                    reason: &str|
     -> Result<(), MetricsError> {
        match bootstrap_ci(n, metric, config.n_bootstrap, config.seed)? {
            Some(ci) => metrics.push(MetricResult {
                name: name.to_string(),
                value: ci.value,
                ci_low: ci.ci_low,
                ci_high: ci.ci_high,
                n_bootstrap: config.n_bootstrap,
                seed: config.seed,
                support,
            }),
            None => absent.push(AbsentMetric {
                name: name.to_string(),
                reason: reason.to_string(),
            }),
        }
        Ok(())
    };

    if texts.is_some() {
        push(
            "rouge_l",
            n,
            &|idxs| {
                let sum: f64 = idxs.iter().filter_map(|&i| evals[i].rouge).sum();
                Some(sum / idxs.len() as f64)
            },
            &mut metrics,
            &mut absent,
            "",
        )?;
    }

    push(
        "lt_type/macro_f1",
        total_instances,
        &|idxs| Some(type_scores(&evals, idxs).0),
        &mut metrics,
        &mut absent,
        "",
    )?;
    push(
        "lt_type/micro_f1",
        total_instances,
        &|idxs| Some(type_scores(&evals, idxs).1),
        &mut metrics,
        &mut absent,
        "",
    )?;

    let no_pairs = "no matched pairs";
    push(
        "lt_change/macro_f1",
        total_pairs,
        &|idxs| pair_scores(&evals, idxs, |p| (p.pred_change, p.ref_change)).map(|s| s.0),
        &mut metrics,
        &mut absent,
        no_pairs,
    )?;
    push(
        "lt_change/micro_f1",
        total_pairs,
        &|idxs| pair_scores(&evals, idxs, |p| (p.pred_change, p.ref_change)).map(|s| s.1),
        &mut metrics,
        &mut absent,
        no_pairs,
    )?;
    push(
        "lt_placement/macro_f1",
        total_pairs,
        &|idxs| pair_scores(&evals, idxs, |p| (p.pred_placement, p.ref_placement)).map(|s| s.0),
        &mut metrics,
        &mut absent,
        no_pairs,
    )?;
    push(
        "lt_placement/micro_f1",
        total_pairs,
        &|idxs| pair_scores(&evals, idxs, |p| (p.pred_placement, p.ref_placement)).map(|s| s.1),
        &mut metrics,
        &mut absent,
        no_pairs,
    )?;
    push(
        "lt_incorrect_placement/macro_f1",
        incorrect_support,
        &|idxs| incorrect_scores(&evals, idxs).map(|s| s.0),
        &mut metrics,
        &mut absent,
        "no incorrect-placement support",
    )?;
    push(
        "lt_incorrect_placement/micro_f1",
        incorrect_support,
        &|idxs| incorrect_scores(&evals, idxs).map(|s| s.1),
        &mut metrics,
        &mut absent,
        "no incorrect-placement support",
    )?;
    push(
        "lt_side/macro_f1",
        total_pairs,
        &|idxs| pair_scores(&evals, idxs, |p| (p.pred_side, p.ref_side)).map(|s| s.0),
        &mut metrics,
        &mut absent,
        no_pairs,
    )?;
    push(
        "lt_side/micro_f1",
        total_pairs,
        &|idxs| pair_scores(&evals, idxs, |p| (p.pred_side, p.ref_side)).map(|s| s.1),
        &mut metrics,
        &mut absent,
        no_pairs,
    )?;

    for (k, bucket) in CountBucket::ALL.iter().enumerate() {
        let support = evals.iter().filter(|e| e.ref_bucket == *bucket).count();
        push(
            &format!("lt_counts/accuracy_{}", bucket.as_str().replace('-', "_")),
            support,
            &|idxs| counts_scores(&evals, idxs).and_then(|c| c.per_bucket[k]),
            &mut metrics,
            &mut absent,
            "no reference reports in bucket",
        )?;
    }
    push(
        "lt_counts/macro_accuracy",
        n,
        &|idxs| counts_scores(&evals, idxs).map(|c| c.overall),
        &mut metrics,
        &mut absent,
        "",
    )?;
    push(
        "lt_counts/bucket_mean_accuracy",
        n,
        &|idxs| counts_scores(&evals, idxs).map(|c| c.bucket_mean),
        &mut metrics,
        &mut absent,
        "",
    )?;

    Ok(MetricReport { metrics, absent })
}
