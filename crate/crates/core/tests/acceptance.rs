//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use rand::Rng;

use radlt::extraction::{
    extract_structured_report, extract_type_mentions, ExtractionConfig, RuleBasedBackend,
};
use radlt::metrics::{
    bootstrap_mean, evaluate_corpus, match_instances, rouge_l, stream_rng, type_f1, EvalConfig,
};
use radlt::schema::{
    placement_for_tip, placement_map, ChangeLabel, CvcSubtype, Evidence, LTInstance, LTType,
    PlacementLabel, SideLabel, StructuredLTReport, TipLabel,
};
use radlt::studystats::{
    kendalls_w, permutation_test, permutation_test_exact, validate_records, EditKind,
    RatingMatrix, RatingRecord, SentenceEdit, Severity,
};
use radlt::synth::{generate_corpus, CaseSpec};

fn pass(criterion: &str, detail: &str) {
    println!("acceptance {criterion}: PASS ({detail})");
}

/// The category table, transcribed independently of the shipped asset:
/// (type code, tip value, expected placement letter).
const EXPECTED_TABLE: &[(&str, &str, char)] = &[
    ("CVC", "superior vena cava", 'C'),
    ("CVC", "superior cavoatrial junction", 'C'),
    ("CVC", "a little into the right atrium", 'C'),
    ("CVC", "too deep into the right atrium", 'I'),
    ("CVC", "brachiocephalic vein", 'I'),
    ("CVC", "internal jugular", 'I'),
    ("CVC", "subclavian vein", 'I'),
    ("CVC", "axillary vein", 'I'),
    ("CVC", "inferior vena cava", 'I'),
    ("CVC", "arterial", 'I'),
    ("CVC", "azygos vein", 'I'),
    ("CVC", "up into the neck", 'I'),
    ("CVC", "in the arm", 'I'),
    ("CVC", "internal mammary vein", 'I'),
    ("CVC", "extravascular", 'I'),
    ("CVC", "crosses midline", 'I'),
    ("ChestTube", "upper", 'C'),
    ("ChestTube", "lower", 'C'),
    ("ChestTube", "middle", 'C'),
    ("ChestTube", "below diaphragm", 'I'),
    ("ChestTube", "side port outside rib cage", 'I'),
    ("ChestTube", "adjacent to mediastinum/esp aorta", 'I'),
    ("ChestTube", "outside chest", 'I'),
    ("ETT", "between 2 and 7cm above the carina", 'C'),
    ("ETT", "outside of 2-7cm above the carina", 'I'),
    ("ETT", "above the thoracic inlet", 'I'),
    ("ETT", "esophagus", 'I'),
    ("ETT", "right main bronchus", 'I'),
    ("ETT", "left main bronchus", 'I'),
    ("IABP", "correctly placed within the proximal descending aorta", 'C'),
    ("IABP", "too distal in the descending aorta", 'I'),
    ("IABP", "ascending aorta", 'I'),
    ("IABP", "aortic arch", 'I'),
    ("NGT", "out-of-view / below diaphragm", 'C'),
    ("NGT", "post-pyloric", 'C'),
    ("NGT", "stomach", 'C'),
    ("NGT", "gastroesophageal junction", 'I'),
    ("NGT", "esophagus", 'I'),
    ("NGT", "trachea", 'I'),
    ("NGT", "bronchus", 'I'),
    ("NGT", "pleural space", 'I'),
    ("NGT", "hypopharynx", 'I'),
    ("SGC", "right ventricular outflow tract", 'C'),
    ("SGC", "right pulmonary artery", 'C'),
    ("SGC", "left pulmonary artery", 'C'),
    ("SGC", "main pulmonary artery", 'C'),
    ("SGC", "right ventricle", 'I'),
    ("SGC", "left interlobar pulmonary artery", 'I'),
    ("SGC", "right interlobar pulmonary artery", 'I'),
    ("SGC", "right upper lobe pulmonary artery", 'I'),
    ("SGC", "right lower lobe pulmonary artery", 'I'),
    ("SGC", "left upper lobe pulmonary artery", 'I'),
    ("SGC", "left lower lobe pulmonary artery", 'I'),
];

#[test]
fn c01_placement_map_fidelity() {
    let start = Instant::now();
    let map = placement_map();
    let mut checked = 0;

    // PICCs share the CVC row of the table.
    let expand = |code: &str| -> Vec<LTType> {
        match code {
            "CVC" => vec![LTType::Cvc, LTType::Picc],
            other => vec![LTType::from_code(other).unwrap()],
        }
    };
    for &(code, tip_value, letter) in EXPECTED_TABLE {
        for lt_type in expand(code) {
            let expected = match letter {
                'C' => PlacementLabel::Correct,
                'I' => PlacementLabel::Incorrect,
                _ => unreachable!(),
            };
            let tip = TipLabel::new(lt_type, tip_value)
                .unwrap_or_else(|e| panic!("{lt_type} {tip_value:?}: {e}"));
            assert_eq!(
                placement_for_tip(lt_type, &tip),
                expected,
                "{lt_type} {tip_value:?}"
            );
            checked += 1;
        }
    }
    // The asset carries nothing beyond the table: 16 CVC + 16 PICC + 7 + 6
    // + 4 + 9 + 11 rows, and no vocabulary for the two tipless types.
    assert_eq!(checked, 69);
    assert_eq!(map.len(), checked);
    assert!(map.tips_for(LTType::TracheostomyTube).is_empty());
    assert!(map.tips_for(LTType::MediastinalDrain).is_empty());
    // Every type also maps unclear -> unclear and N/A -> N/A.
    for lt_type in LTType::ALL {
        assert_eq!(
            placement_for_tip(lt_type, &TipLabel::unclear(lt_type)),
            PlacementLabel::Unclear
        );
        assert_eq!(
            placement_for_tip(lt_type, &TipLabel::not_specified(lt_type)),
            PlacementLabel::NotSpecified
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass("C1 placement-map fidelity", &format!("{checked} assignments, {elapsed:?}"));
}

#[test]
fn c02_round_trip_identity() {
    let start = Instant::now();
    let backend = RuleBasedBackend::new();
    let config = ExtractionConfig::default();
    let template = CaseSpec::default();
    let cases = generate_corpus(&template, 1000, 2024).unwrap();
    let preds: Vec<StructuredLTReport> = cases
        .iter()
        .map(|(gt, text)| {
            extract_structured_report(gt.report_id(), text, &backend, &config).unwrap()
        })
        .collect();
    let aligned: Vec<(&StructuredLTReport, &StructuredLTReport)> = preds
        .iter()
        .zip(cases.iter().map(|(gt, _)| gt))
        .collect();
    let report = evaluate_corpus(&aligned, None, &EvalConfig { n_bootstrap: 0, seed: 0 }).unwrap();
    assert!(!report.metrics.is_empty());
    for metric in &report.metrics {
        assert_eq!(metric.value, 1.0, "{}", metric.name);
        assert_eq!(metric.ci_low, 1.0, "{}", metric.name);
        assert_eq!(metric.ci_high, 1.0, "{}", metric.name);
    }
    // A thousand default cases support every metric.
    assert!(report.absent.is_empty(), "{:?}", report.absent);

    // A corpus without incorrect placements or large counts reports those
    // metrics absent rather than zero or one.
    let narrow = CaseSpec {
        incorrect_placement_rate: 0.0,
        min_instances: 1,
        max_instances: 2,
        ..Default::default()
    };
    let cases = generate_corpus(&narrow, 50, 77).unwrap();
    let preds: Vec<StructuredLTReport> = cases
        .iter()
        .map(|(gt, text)| {
            extract_structured_report(gt.report_id(), text, &backend, &config).unwrap()
        })
        .collect();
    let aligned: Vec<(&StructuredLTReport, &StructuredLTReport)> = preds
        .iter()
        .zip(cases.iter().map(|(gt, _)| gt))
        .collect();
    let narrow_report =
        evaluate_corpus(&aligned, None, &EvalConfig { n_bootstrap: 0, seed: 0 }).unwrap();
    assert!(narrow_report.is_absent("lt_incorrect_placement/macro_f1"));
    assert!(narrow_report.is_absent("lt_counts/accuracy_0"));
    assert!(narrow_report.is_absent("lt_counts/accuracy_3_or_more"));

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass("C2 round-trip identity", &format!("1000 cases, {elapsed:?}"));
}

fn single_instance_report(id: &str, lt_type: LTType) -> StructuredLTReport {
    let subtype = (lt_type == LTType::Cvc).then_some(CvcSubtype::UnspecifiedCvc);
    let inst = LTInstance::new(
        lt_type,
        subtype,
        SideLabel::NotSpecified,
        ChangeLabel::NotSpecified,
        TipLabel::not_specified(lt_type),
        PlacementLabel::NotSpecified,
        false,
        Evidence::default(),
    )
    .unwrap();
    StructuredLTReport::new(id, vec![inst])
}

#[test]
fn c03_planted_error_arithmetic() {
    let mut rng = stream_rng(333, 0);
    for case in 0..100 {
        let n = rng.gen_range(5..=60);
        let k = rng.gen_range(0..=n);
        let mut corpus: Vec<(StructuredLTReport, StructuredLTReport)> = Vec::new();
        for i in 0..n {
            let ref_type = LTType::ALL[rng.gen_range(0..9)];
            let reference = single_instance_report(&format!("r{i}"), ref_type);
            let pred = if i < k {
                // Substitute with a different type.
                let mut other = LTType::ALL[rng.gen_range(0..9)];
                while other == ref_type {
                    other = LTType::ALL[rng.gen_range(0..9)];
                }
                single_instance_report(&format!("r{i}"), other)
            } else {
                reference.clone()
            };
            corpus.push((pred, reference));
        }
        let micro = type_f1(&corpus).unwrap().micro_f1;
        let closed_form = (n - k) as f64 / n as f64;
        assert!(
            (micro - closed_form).abs() <= 1e-9,
            "case {case}: micro {micro} vs closed form {closed_form} (n={n}, k={k})"
        );

        // Brute-force per-item oracle over raw instance lists.
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (pred, reference) in &corpus {
            for lt_type in LTType::ALL {
                let p = pred
                    .instances()
                    .iter()
                    .filter(|i| i.metric_type() == lt_type)
                    .count();
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
        let oracle = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        assert!((micro - oracle).abs() <= 1e-12, "case {case}");
    }
    pass("C3 planted-error arithmetic", "100 random (N, k) configurations");
}

fn random_instance<R: Rng>(lt_type: LTType, rng: &mut R) -> LTInstance {
    let subtype = (lt_type == LTType::Cvc).then(|| CvcSubtype::ALL[rng.gen_range(0..4)]);
    let side = *[
        SideLabel::Left,
        SideLabel::Right,
        SideLabel::Unclear,
        SideLabel::NotSpecified,
    ]
    .get(rng.gen_range(0..4))
    .unwrap();
    let change = *[
        ChangeLabel::New,
        ChangeLabel::Moved,
        ChangeLabel::Removed,
        ChangeLabel::Unchanged,
        ChangeLabel::Unclear,
        ChangeLabel::NotSpecified,
    ]
    .get(rng.gen_range(0..6))
    .unwrap();
    let tips = placement_map().tips_for(lt_type);
    let tip = match rng.gen_range(0..tips.len() + 2) {
        i if i < tips.len() => TipLabel::new(lt_type, &tips[i]).unwrap(),
        i if i == tips.len() => TipLabel::unclear(lt_type),
        _ => TipLabel::not_specified(lt_type),
    };
    let placement = placement_for_tip(lt_type, &tip);
    LTInstance::new(
        lt_type,
        subtype,
        side,
        change,
        tip,
        placement,
        false,
        Evidence::default(),
    )
    .unwrap()
}

/// Attribute-disagreement cost, restated from the matching policy.
fn policy_cost(pred: &LTInstance, reference: &LTInstance) -> i64 {
    let side = (pred.side() != reference.side()) as i64;
    let change = (pred.change() != reference.change()) as i64;
    let tip = (pred.tip().as_str() != reference.tip().as_str()) as i64;
    4 * (side + change + tip) + side
}

/// Exhaustive minimum assignment cost over all injective pairings.
fn brute_force_min(pred: &[LTInstance], reference: &[LTInstance]) -> i64 {
    fn recurse(
        pred: &[LTInstance],
        reference: &[LTInstance],
        row: usize,
        used: &mut Vec<bool>,
        acc: i64,
        best: &mut i64,
    ) {
        if row == pred.len() {
            *best = (*best).min(acc);
            return;
        }
        for (col, reference_inst) in reference.iter().enumerate() {
            if !used[col] {
                used[col] = true;
                recurse(
                    pred,
                    reference,
                    row + 1,
                    used,
                    acc + policy_cost(&pred[row], reference_inst),
                    best,
                );
                used[col] = false;
            }
        }
    }
    let (rows, cols): (&[LTInstance], &[LTInstance]) = if pred.len() <= reference.len() {
        (pred, reference)
    } else {
        (reference, pred)
    };
    // Cost is symmetric in the attributes compared, so transposition is safe.
    let mut best = i64::MAX;
    let mut used = vec![false; cols.len()];
    fn transposed_cost(a: &LTInstance, b: &LTInstance) -> i64 {
        policy_cost(a, b)
    }
    let _ = transposed_cost;
    recurse(rows, cols, 0, &mut used, 0, &mut best);
    best
}

#[test]
fn c04_matching_optimality() {
    let start = Instant::now();
    let mut rng = stream_rng(444, 0);
    let mut discrepancies = 0;
    for _ in 0..10_000 {
        let lt_type = LTType::ALL[rng.gen_range(0..9)];
        let n_pred = rng.gen_range(0..=6);
        let n_ref = rng.gen_range(0..=6);
        let pred_instances: Vec<LTInstance> =
            (0..n_pred).map(|_| random_instance(lt_type, &mut rng)).collect();
        let ref_instances: Vec<LTInstance> =
            (0..n_ref).map(|_| random_instance(lt_type, &mut rng)).collect();
        let pred = StructuredLTReport::new("p", pred_instances.clone());
        let reference = StructuredLTReport::new("r", ref_instances.clone());
        let result = match_instances(&pred, &reference);
        assert_eq!(result.pairs.len(), n_pred.min(n_ref));
        let brute = if n_pred == 0 || n_ref == 0 {
            0
        } else {
            brute_force_min(&pred_instances, &ref_instances)
        };
        if result.total_cost() != brute {
            discrepancies += 1;
        }
    }
    assert_eq!(discrepancies, 0);
    let elapsed = start.elapsed();
    pass("C4 matching optimality", &format!("10000 groups, {elapsed:?}"));
}

/// Classic quadratic-table LCS, written independently of the library's
/// rolling-row version.
fn oracle_lcs(a: &[String], b: &[String]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

fn oracle_rouge(pred: &str, reference: &str) -> f64 {
    let tok = |t: &str| -> Vec<String> {
        t.split_whitespace()
            .filter_map(|w| {
                let w: String = w
                    .chars()
                    .filter(|c| !c.is_ascii_punctuation())
                    .flat_map(|c| c.to_lowercase())
                    .collect();
                (!w.is_empty()).then_some(w)
            })
            .collect()
    };
    let (a, b) = (tok(pred), tok(reference));
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let lcs = oracle_lcs(&a, &b) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / a.len() as f64;
    let r = lcs / b.len() as f64;
    2.0 * p * r / (p + r)
}

#[test]
fn c05_rouge_oracle() {
    let mut rng = stream_rng(555, 0);
    let vocab = ["clear", "lungs", "effusion", "tube", "left", "right", "no", "tip", "svc", "new"];
    for case in 0..1000 {
        let len_a = rng.gen_range(0..25);
        let len_b = rng.gen_range(0..25);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng, len: usize| -> String {
            (0..len)
                .map(|_| vocab[rng.gen_range(0..vocab.len())])
                .collect::<Vec<_>>()
                .join(" ")
        };
        let a = mk(&mut rng, len_a);
        let b = mk(&mut rng, len_b);
        let got = rouge_l(&a, &b);
        let want = oracle_rouge(&a, &b);
        assert!(
            (got - want).abs() <= 1e-12,
            "case {case}: {got} vs {want} for {a:?} / {b:?}"
        );
    }
    assert_eq!(rouge_l("left tube new", "left tube new"), 1.0);
    assert_eq!(rouge_l("clear lungs", "new tube"), 0.0);
    pass("C5 ROUGE-L oracle", "1000 random pairs + edge cases");
}

#[test]
fn c06_bootstrap_calibration() {
    let start = Instant::now();
    for (which, p) in [(0u64, 0.5f64), (1, 0.9), (2, 0.97)] {
        let mut covered = 0;
        let trials = 500;
        for trial in 0..trials {
            let mut rng = stream_rng(600 + which, trial as u64);
            let sample: Vec<f64> = (0..300).map(|_| (rng.gen::<f64>() < p) as u8 as f64).collect();
            let ci = bootstrap_mean(&sample, 1000, 60_000 + which * 1000 + trial as u64).unwrap();
            if ci.ci_low <= p && p <= ci.ci_high {
                covered += 1;
            }
        }
        let coverage = covered as f64 / trials as f64;
        assert!(
            (0.92..=0.98).contains(&coverage),
            "p={p}: coverage {coverage}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    pass("C6 bootstrap calibration", &format!("3 rates x 500 trials, {elapsed:?}"));
}

/// Independent enumeration over 8-bit masks with popcount 4.
fn oracle_exact_p(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let pool: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let total: f64 = pool.iter().sum();
    let obs = (a.iter().sum::<f64>() * 4.0 - b.iter().sum::<f64>() * 4.0).abs();
    let mut all = 0u32;
    let mut extreme = 0u32;
    for mask in 0u32..256 {
        if mask.count_ones() != 4 {
            continue;
        }
        all += 1;
        let sum_a: f64 = (0..8).filter(|i| mask & (1 << i) != 0).map(|i| pool[i]).sum();
        let stat = (sum_a * 4.0 - (total - sum_a) * 4.0).abs();
        if stat >= obs - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / all as f64
}

#[test]
fn c07_permutation_exactness_and_calibration() {
    // Exactness on random 4-vs-4 cases against the bitmask oracle.
    let mut rng = stream_rng(777, 0);
    for _ in 0..50 {
        let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0..10) as f64);
        let b: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0..10) as f64);
        let got = permutation_test_exact(&a, &b).unwrap();
        let want = oracle_exact_p(&a, &b);
        assert!(
            (got - want).abs() < 1e-12,
            "exact {got} vs oracle {want} for {a:?} {b:?}"
        );
    }

    // Calibration under the null: both groups from one continuous
    // distribution, fraction of p < 0.05 within [0.03, 0.07].
    let trials = 1000;
    let mut rejections = 0;
    for trial in 0..trials {
        let mut rng = stream_rng(778, trial as u64);
        let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            // Box-Muller from two uniforms.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let a: Vec<f64> = (0..20).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..20).map(|_| normal(&mut rng)).collect();
        let p = permutation_test(&a, &b, 999, 70_000 + trial as u64).unwrap();
        if p < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    assert!((0.03..=0.07).contains(&rate), "null rejection rate {rate}");
    pass(
        "C7 permutation exactness + calibration",
        &format!("50 exact cases; null rejection rate {rate}"),
    );
}

/// Kendall's W restated with the alternative textbook form
/// W = (12 sum R_i^2 - 3 m^2 n (n+1)^2) / (m^2 n (n^2 - 1) - m sum T_j),
/// with mid-ranks computed by counting rather than sorting.
fn oracle_w(rows: &[Vec<f64>]) -> f64 {
    let m = rows.len() as f64;
    let n = rows[0].len();
    let rank = |row: &[f64], i: usize| -> f64 {
        let less = row.iter().filter(|v| **v < row[i]).count() as f64;
        let equal = row.iter().filter(|v| **v == row[i]).count() as f64;
        less + (equal + 1.0) / 2.0
    };
    let mut item_sums = vec![0.0; n];
    let mut tie_term = 0.0;
    for row in rows {
        for (i, sum) in item_sums.iter_mut().enumerate() {
            *sum += rank(row, i);
        }
        let mut seen: Vec<f64> = Vec::new();
        for v in row {
            if !seen.contains(v) {
                seen.push(*v);
                let t = row.iter().filter(|x| **x == *v).count() as f64;
                tie_term += t * t * t - t;
            }
        }
    }
    let nf = n as f64;
    let sum_sq: f64 = item_sums.iter().map(|r| r * r).sum();
    let numerator = 12.0 * sum_sq - 3.0 * m * m * nf * (nf + 1.0) * (nf + 1.0);
    let denominator = m * m * nf * (nf * nf - 1.0) - m * tie_term;
    numerator / denominator
}

#[test]
fn c08_kendalls_w() {
    let perfect = RatingMatrix::new(vec![
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
    ])
    .unwrap();
    assert!((kendalls_w(&perfect).unwrap() - 1.0).abs() < 1e-12);

    let reversed = RatingMatrix::new(vec![
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        vec![5.0, 4.0, 3.0, 2.0, 1.0],
    ])
    .unwrap();
    assert!(kendalls_w(&reversed).unwrap().abs() < 1e-12);

    let mut rng = stream_rng(888, 0);
    let mut checked = 0;
    while checked < 50 {
        let raters = rng.gen_range(2..=5);
        let items = rng.gen_range(3..=12);
        let rows: Vec<Vec<f64>> = (0..raters)
            .map(|_| (0..items).map(|_| rng.gen_range(1..=3) as f64).collect())
            .collect();
        let matrix = RatingMatrix::new(rows.clone()).unwrap();
        match kendalls_w(&matrix) {
            Ok(w) => {
                let want = oracle_w(&rows);
                assert!((w - want).abs() <= 1e-12, "{w} vs {want} for {rows:?}");
                checked += 1;
            }
            // All raters fully tied has no defined W; the oracle divides by
            // zero there too. Skip and draw another matrix.
            Err(_) => continue,
        }
    }
    pass("C8 Kendall's W", "perfect, reversal, 50 tied matrices vs oracle");
}

#[test]
fn c09_score_schema_enforcement() {
    let edit = |kind: EditKind, severity: Severity, idx: Option<usize>| SentenceEdit {
        kind,
        severity,
        sentence_index: idx,
        corrected_text: "text".to_string(),
    };
    let record = |score: u8, edits: Vec<SentenceEdit>| RatingRecord {
        study_id: "s".to_string(),
        reviewer_id: "r".to_string(),
        reviewer_seniority: radlt::studystats::Seniority::Senior,
        source: radlt::studystats::Source::Original,
        score,
        edits,
        flagged_unreadable: false,
        cohort: radlt::studystats::Cohort::Target,
    };

    // A valid corpus covering every legal shape: zero false rejections.
    let valid: Vec<RatingRecord> = (0..100)
        .map(|i| match i % 4 {
            0 => record(3, vec![]),
            1 => record(1, vec![edit(EditKind::Modify, Severity::Critical, Some(i))]),
            2 => record(
                1,
                vec![
                    edit(EditKind::Omission, Severity::Critical, None),
                    edit(EditKind::Modify, Severity::Insignificant, Some(0)),
                ],
            ),
            _ => record(2, vec![edit(EditKind::Omission, Severity::Insignificant, None)]),
        })
        .collect();
    assert!(validate_records(&valid).is_ok());

    // A violation corpus where every row breaks a rule: 100% rejection.
    let violations: Vec<RatingRecord> = (0..100)
        .map(|i| match i % 6 {
            0 => record(3, vec![edit(EditKind::Modify, Severity::Critical, Some(0))]),
            1 => record(1, vec![]),
            2 => record(1, vec![edit(EditKind::Modify, Severity::Insignificant, Some(0))]),
            3 => record(2, vec![]),
            4 => record(2, vec![edit(EditKind::Modify, Severity::Critical, Some(0))]),
            _ => record(5, vec![]),
        })
        .collect();
    match validate_records(&violations) {
        Err(radlt::studystats::StudyError::InvalidRecords(rows)) => {
            let flagged: std::collections::HashSet<usize> =
                rows.iter().map(|(i, _)| *i).collect();
            assert_eq!(flagged.len(), 100, "every violating row must be flagged");
        }
        other => panic!("expected InvalidRecords, got {other:?}"),
    }
    pass("C9 score-schema enforcement", "100% rejection, 0% false rejection");
}

/// The six report texts of the inter-rater examples with their manually
/// annotated type sets.
fn paper_reports() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        (
            "Moderate left pneumothorax, decreased in size on a subsequent radiograph after a \
             thoracostomy tube was placed. Normal cardiomediastinal silhouette. No pleural \
             effusion. The right lung is clear.",
            vec!["Chest Tube"],
        ),
        (
            "Since earlier today, new right IJ CVC with tip directed laterally in the right \
             axillary vein. Recommend repositioning. No pneumothorax. Increased pulmonary \
             vascular congestion and interstitial edema. Remainder unchanged. Bibasilar \
             atelectasis.",
            vec!["Central Venous Catheter"],
        ),
        (
            "Since earlier today, new left IJ CVC with tip in the upper SVC. No pneumothorax. \
             No other change. ETT with tip in good position. Right IJ SGC with tip in the MPA. \
             Sternotomy with mediastinal clips, drains and AVR. Left atrial appendage closure \
             clip. AV pacemaker. Left chest tube. Small right pleural effusion with associated \
             atelectasis in the right base.",
            vec![
                "Central Venous Catheter",
                "Endotracheal Tube",
                "Swan-Ganz Catheter",
                "Chest Tube",
                "Mediastinal Drain",
            ],
        ),
        (
            "No focal consolidation. No large pleural effusion or discernible pneumothorax. \
             Mild bibasilar atelectasis. Unremarkable cardiac silhouette size.",
            vec![],
        ),
        (
            "Compared with _. The right IJ CVC has been removed. No focal airspace \
             consolidation. No pleural effusion or pneumothorax. Hyperinflation. Scattered \
             bilateral calcified granulomas. Normal heart size. Sternotomy.",
            vec!["Central Venous Catheter"],
        ),
        (
            "Since _, the left central line has changed position and now crosses the midline \
             with tip projecting over the right brachiocephalic vein. Otherwise no change. \
             Bilateral pleural effusions. Atelectasis both lower lungs. Sternotomy. \
             Postoperative changes bilateral lung transplant.",
            vec!["Central Venous Catheter"],
        ),
    ]
}

/// Optional integration check against a configured chat-completions
/// endpoint; excluded from the default offline suite. Provide
/// RADLT_E2E_ENDPOINT, RADLT_E2E_MODEL and (optionally)
/// RADLT_E2E_CREDENTIAL_ENV, then run
/// `cargo test --test acceptance -- --ignored c11`.
#[test]
#[ignore = "requires a configured chat-completions endpoint"]
fn c11_remote_type_sets_on_quoted_reports() {
    let endpoint = std::env::var("RADLT_E2E_ENDPOINT")
        .expect("RADLT_E2E_ENDPOINT must point at a chat-completions endpoint");
    let model = std::env::var("RADLT_E2E_MODEL").unwrap_or_else(|_| "gpt-4o".to_string());
    let credential_env_var = std::env::var("RADLT_E2E_CREDENTIAL_ENV").unwrap_or_default();
    let config = ExtractionConfig {
        endpoint,
        model_name: model,
        credential_env_var,
        ..Default::default()
    };
    let backend = radlt::extraction::RemoteLlmBackend::new(config).unwrap();
    let mut matches = 0;
    let total = paper_reports().len();
    for (text, expected) in paper_reports() {
        let mentions = extract_type_mentions(text, &backend).unwrap();
        let got: std::collections::BTreeSet<&str> =
            mentions.iter().map(|m| m.lt_type_name.as_str()).collect();
        let want: std::collections::BTreeSet<&str> = expected.into_iter().collect();
        if got == want {
            matches += 1;
        } else {
            eprintln!("mismatch for {text:?}: got {got:?}, want {want:?}");
        }
    }
    assert!(matches.ge(&(total - 1)), "only {matches}/{total} matched");
    pass("C11 remote type sets", &format!("{matches}/{total} reports"));
}

/// Offline stand-in exercising the same six texts through the rule
/// backend (not a numbered criterion; keeps the quoted-report path tested
/// without a network).
#[test]
fn rule_backend_type_sets_on_quoted_reports() {
    let backend = RuleBasedBackend::new();
    for (text, expected) in paper_reports() {
        let mentions = extract_type_mentions(text, &backend).unwrap();
        let got: std::collections::BTreeSet<&str> =
            mentions.iter().map(|m| m.lt_type_name.as_str()).collect();
        let want: std::collections::BTreeSet<&str> = expected.into_iter().collect();
        assert_eq!(got, want, "for {text:?}");
    }
}
