//! Confusion bookkeeping and the structured-report metric family.
//!
//! Type F1 uses per-report multiset counting (TP = min of the two counts per
//! type). Change, placement and side F1 are multiclass F1 over matched pairs.
//! Incorrect-placement F1 is one-vs-rest for the incorrect class. Macro
//! averages exclude classes with zero support, mirroring the absent cells of
//! result tables.

use std::collections::BTreeMap;

use crate::metrics::matching::MatchResult;
use crate::metrics::MetricsError;
use crate::schema::{
    count_bucket, CountBucket, LTType, PlacementLabel, StructuredLTReport,
};

/// Per-class true-positive / false-positive / false-negative counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionTally<K: Ord> {
    classes: BTreeMap<K, Counts>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(2.0 * self.tp as f64 / denom as f64)
        }
    }
}

impl<K: Ord + Clone> ConfusionTally<K> {
    pub fn new() -> Self {
        Self {
            classes: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, class: K, tp: usize, fp: usize, fn_: usize) {
        let counts = self.classes.entry(class).or_default();
        counts.tp += tp;
        counts.fp += fp;
        counts.fn_ += fn_;
    }

    /// Record one single-label observation (pred class vs. reference class).
    pub fn observe(&mut self, pred: K, reference: K) {
        if pred == reference {
            self.add(pred, 1, 0, 0);
        } else {
            self.add(pred, 0, 1, 0);
            self.add(reference, 0, 0, 1);
        }
    }

    pub fn counts(&self, class: &K) -> Counts {
        self.classes.get(class).copied().unwrap_or_default()
    }

    /// Globally pooled F1.
    pub fn micro_f1(&self) -> Option<f64> {
        let mut total = Counts::default();
        for c in self.classes.values() {
            total.tp += c.tp;
            total.fp += c.fp;
            total.fn_ += c.fn_;
        }
        total.f1()
    }

    /// Unweighted mean of per-class F1 over classes with any support.
    pub fn macro_f1(&self) -> Option<f64> {
        let scores: Vec<f64> = self.classes.values().filter_map(Counts::f1).collect();
        if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        }
    }
}

/// A (macro, micro) score pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Pair {
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// Per-report type confusion under multiset counting.
pub(crate) fn type_confusion(
    pred: &StructuredLTReport,
    reference: &StructuredLTReport,
) -> ([usize; 9], [usize; 9], [usize; 9]) {
    let p = pred.type_counts();
    let r = reference.type_counts();
    let mut tp = [0usize; 9];
    let mut fp = [0usize; 9];
    let mut fn_ = [0usize; 9];
    for i in 0..9 {
        tp[i] = p[i].min(r[i]);
        fp[i] = p[i] - tp[i];
        fn_[i] = r[i] - tp[i];
    }
    (tp, fp, fn_)
}

/// Macro/micro F1 on L&T type over a corpus of aligned report pairs.
pub fn type_f1(
    corpus: &[(StructuredLTReport, StructuredLTReport)],
) -> Result<F1Pair, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut tally: ConfusionTally<LTType> = ConfusionTally::new();
    for (pred, reference) in corpus {
        let (tp, fp, fn_) = type_confusion(pred, reference);
        for (i, lt_type) in LTType::ALL.iter().enumerate() {
            tally.add(*lt_type, tp[i], fp[i], fn_[i]);
        }
    }
    // An all-empty corpus has no type support anywhere; score it perfect on
    // the micro side and absent on the macro side is not meaningful, so both
    // default to 1.0 only when there is literally nothing to disagree on.
    let macro_f1 = tally.macro_f1().unwrap_or(1.0);
    let micro_f1 = tally.micro_f1().unwrap_or(1.0);
    Ok(F1Pair { macro_f1, micro_f1 })
}

fn pair_f1<K: Ord + Clone, F: Fn(&crate::metrics::matching::MatchedPair) -> (K, K)>(
    match_results: &[MatchResult],
    project: F,
) -> Result<F1Pair, MetricsError> {
    let mut tally: ConfusionTally<K> = ConfusionTally::new();
    let mut any = false;
    for result in match_results {
        for pair in &result.pairs {
            any = true;
            let (p, r) = project(pair);
            tally.observe(p, r);
        }
    }
    if !any {
        return Err(MetricsError::NoMatchedPairs);
    }
    Ok(F1Pair {
        macro_f1: tally.macro_f1().expect("matched pairs imply support"),
        micro_f1: tally.micro_f1().expect("matched pairs imply support"),
    })
}

/// Multiclass F1 over longitudinal-change labels on matched pairs.
pub fn change_f1(match_results: &[MatchResult]) -> Result<F1Pair, MetricsError> {
    pair_f1(match_results, |p| (p.pred_change, p.ref_change))
}

/// Multiclass F1 over placement labels on matched pairs.
pub fn placement_f1(match_results: &[MatchResult]) -> Result<F1Pair, MetricsError> {
    pair_f1(match_results, |p| (p.pred_placement, p.ref_placement))
}

/// Multiclass F1 over side labels on matched pairs (auxiliary metric).
pub fn side_f1(match_results: &[MatchResult]) -> Result<F1Pair, MetricsError> {
    pair_f1(match_results, |p| (p.pred_side, p.ref_side))
}

/// One-vs-rest F1 for the incorrect placement class. The micro variant pools
/// all pairs; the macro variant averages the per-type incorrect-class F1 over
/// types with incorrect support. Reported absent when no pair has incorrect
/// placement on either side.
pub fn incorrect_placement_f1(match_results: &[MatchResult]) -> Result<F1Pair, MetricsError> {
    let mut any_pair = false;
    let mut global = Counts::default();
    let mut per_type: BTreeMap<LTType, Counts> = BTreeMap::new();
    for result in match_results {
        for pair in &result.pairs {
            any_pair = true;
            let pred_inc = pair.pred_placement == PlacementLabel::Incorrect;
            let ref_inc = pair.ref_placement == PlacementLabel::Incorrect;
            let counts = per_type.entry(pair.metric_type).or_default();
            match (pred_inc, ref_inc) {
                (true, true) => {
                    global.tp += 1;
                    counts.tp += 1;
                }
                (true, false) => {
                    global.fp += 1;
                    counts.fp += 1;
                }
                (false, true) => {
                    global.fn_ += 1;
                    counts.fn_ += 1;
                }
                (false, false) => {}
            }
        }
    }
    if !any_pair {
        return Err(MetricsError::NoMatchedPairs);
    }
    let micro = match global.f1() {
        Some(f1) => f1,
        None => return Err(MetricsError::NoIncorrectSupport),
    };
    let per_type_scores: Vec<f64> = per_type.values().filter_map(Counts::f1).collect();
    let macro_f1 = per_type_scores.iter().sum::<f64>() / per_type_scores.len() as f64;
    Ok(F1Pair {
        macro_f1,
        micro_f1: micro,
    })
}

/// Count-bucket accuracies for a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsAccuracy {
    /// Accuracy among reports whose reference count falls in each bucket;
    /// `None` for buckets with no reference support.
    pub per_bucket: [Option<f64>; 4],
    /// Prevalence-weighted accuracy over all reports.
    pub overall: f64,
    /// Unweighted mean of the supported per-bucket accuracies.
    pub bucket_mean: f64,
}

/// Accuracy of bucketed instance counts, stratified by the reference bucket.
pub fn counts_accuracy(
    corpus: &[(StructuredLTReport, StructuredLTReport)],
) -> Result<CountsAccuracy, MetricsError> {
    let buckets: Vec<(CountBucket, CountBucket)> = corpus
        .iter()
        .map(|(p, r)| (count_bucket(p.len()), count_bucket(r.len())))
        .collect();
    counts_accuracy_from_buckets(&buckets).ok_or(MetricsError::EmptyCorpus)
}

pub(crate) fn counts_accuracy_from_buckets(
    buckets: &[(CountBucket, CountBucket)],
) -> Option<CountsAccuracy> {
    if buckets.is_empty() {
        return None;
    }
    let mut hit = [0usize; 4];
    let mut support = [0usize; 4];
    for (pred, reference) in buckets {
        let idx = CountBucket::ALL.iter().position(|b| b == reference).unwrap();
        support[idx] += 1;
        if pred == reference {
            hit[idx] += 1;
        }
    }
    let per_bucket: [Option<f64>; 4] = std::array::from_fn(|i| {
        (support[i] > 0).then(|| hit[i] as f64 / support[i] as f64)
    });
    let overall = hit.iter().sum::<usize>() as f64 / buckets.len() as f64;
    let supported: Vec<f64> = per_bucket.iter().flatten().copied().collect();
    let bucket_mean = supported.iter().sum::<f64>() / supported.len() as f64;
    Some(CountsAccuracy {
        per_bucket,
        overall,
        bucket_mean,
    })
}
