//! Property tests for the spec-level invariants that hold across the whole
//! input space, plus a few seeded statistical properties.

use proptest::prelude::*;

use radlt::extraction::{
    extract_structured_report, extract_type_mentions, ExtractionConfig, RuleBasedBackend,
};
use radlt::metrics::{bootstrap_mean, rouge_l, stream_rng, type_f1};
use radlt::reportprep::{normalize_short_report, ShortReportOutcome};
use radlt::schema::StructuredLTReport;
use radlt::studystats::{kendalls_w, RatingMatrix};
use radlt::synth::{generate_case, CaseSpec};

fn token_text() -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-z]{1,8}", 0..20).prop_map(|words| words.join(" "))
}

proptest! {
    #[test]
    fn rouge_is_symmetric_at_beta_one(a in token_text(), b in token_text()) {
        let ab = rouge_l(&a, &b);
        let ba = rouge_l(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn structured_reports_round_trip_byte_identically(seed in any::<u64>()) {
        let spec = CaseSpec { seed, incorrect_placement_rate: 0.3, ..Default::default() };
        let (report, _) = generate_case(&spec).unwrap();
        let once = serde_json::to_string(&report).unwrap();
        let parsed: StructuredLTReport = serde_json::from_str(&once).unwrap();
        let twice = serde_json::to_string(&parsed).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn extraction_types_are_a_subset_of_stage_one(seed in any::<u64>()) {
        let spec = CaseSpec { seed, ..Default::default() };
        let (_, text) = generate_case(&spec).unwrap();
        let backend = RuleBasedBackend::new();
        let mentions = extract_type_mentions(&text, &backend).unwrap();
        let mentioned: std::collections::HashSet<&str> =
            mentions.iter().map(|m| m.lt_type_name.as_str()).collect();
        let report = extract_structured_report(
            "r",
            &text,
            &backend,
            &ExtractionConfig::default(),
        )
        .unwrap();
        for inst in report.instances() {
            prop_assert!(
                mentioned.contains(inst.lt_type().stage1_name()),
                "{:?} not established in stage 1 ({:?})",
                inst.lt_type(),
                mentioned
            );
        }
    }

    #[test]
    fn kendalls_w_invariant_under_monotone_relabeling(
        rows in proptest::collection::vec(
            proptest::collection::vec(1u8..=3, 6),
            2..5,
        )
    ) {
        let original: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        // Strictly increasing relabeling of the 3-level scale.
        let relabeled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| [2.0, 5.0, 9.0][(v - 1) as usize]).collect())
            .collect();
        let a = kendalls_w(&RatingMatrix::new(original).unwrap());
        let b = kendalls_w(&RatingMatrix::new(relabeled).unwrap());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "defined-ness diverged: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn short_report_normalization_is_idempotent(text in "[A-Za-z .]{0,40}") {
        match normalize_short_report(&text) {
            ShortReportOutcome::Templated(once) => {
                match normalize_short_report(&once) {
                    ShortReportOutcome::Keep(again) | ShortReportOutcome::Templated(again) => {
                        prop_assert_eq!(once, again);
                    }
                    ShortReportOutcome::Filtered => prop_assert!(false, "template filtered"),
                }
            }
            ShortReportOutcome::Keep(kept) => prop_assert_eq!(kept, text),
            ShortReportOutcome::Filtered => {}
        }
    }
}

/// Micro F1 equals the harmonic mean of micro precision and recall computed
/// from summed per-report tallies, cross-checked per item.
#[test]
fn micro_f1_is_harmonic_mean_of_pooled_precision_recall() {
    use radlt::schema::LTType;
    for seed in 0..20u64 {
        let n_reports = 3 + (seed as usize % 48);
        let mut corpus = Vec::new();
        for i in 0..n_reports {
            let gt = generate_case(&CaseSpec {
                seed: seed * 1000 + i as u64,
                ..Default::default()
            })
            .unwrap()
            .0;
            let pred = generate_case(&CaseSpec {
                seed: seed * 1000 + 500 + i as u64,
                ..Default::default()
            })
            .unwrap()
            .0;
            corpus.push((pred, gt));
        }
        let micro = type_f1(&corpus).unwrap().micro_f1;

        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (pred, reference) in &corpus {
            for lt_type in LTType::ALL {
                let p = pred.instances().iter().filter(|i| i.metric_type() == lt_type).count();
                let r = reference
                    .instances()
                    .iter()
                    .filter(|i| i.metric_type() == lt_type)
                    .count();
                tp += p.min(r);
                fp += p.saturating_sub(r);
                fn_ += r.saturating_sub(p);
            }
        }
        if tp + fp == 0 || tp + fn_ == 0 {
            continue;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        let harmonic = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        assert!((micro - harmonic).abs() < 1e-12, "seed {seed}");
    }
}

/// Interval width shrinks in expectation as the corpus grows.
#[test]
fn bootstrap_interval_width_decreases_with_corpus_size() {
    let width_at = |n: usize| -> f64 {
        let mut total = 0.0;
        let trials = 30;
        for trial in 0..trials {
            let mut rng = stream_rng(4242, trial);
            let sample: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() < 0.7) as u8 as f64).collect();
            let ci = bootstrap_mean(&sample, 400, 9_000 + trial).unwrap();
            total += ci.ci_high - ci.ci_low;
        }
        total / trials as f64
    };
    let narrow = width_at(400);
    let wide = width_at(100);
    // Expected ratio is 1/2; anything below 0.9 demonstrates monotonicity
    // with slack for resampling noise.
    assert!(
        narrow < wide * 0.9,
        "width at 400 = {narrow}, width at 100 = {wide}"
    );
}

use rand::Rng;
