//! Subcommand implementations, shared between the binary and its tests.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use radlt::adapters;
use radlt::extraction::{
    extract_corpus, ExtractionBackend, ExtractionConfig, RemoteLlmBackend, RuleBasedBackend,
};
use radlt::jsonl::{read_jsonl, write_jsonl, FindingsRecord};
use radlt::metrics::{align_corpora, evaluate_corpus, EvalConfig, MetricReport, MetricResult};
use radlt::reportprep::{
    clean_report, merge_impression_into_findings, normalize_short_report, Era, SectionedReport,
    ShortReportOutcome,
};
use radlt::schema::StructuredLTReport;
use radlt::studystats::{
    self, classify_error_category, error_agreement, kendalls_w, proportion, rating_matrices,
    sentence_acceptable_rate, validate_records, RatingRecord, Source,
};
use radlt::synth::{generate_corpus, CaseSpec};

use crate::config::{self, FileConfig};
use crate::manifest::ManifestBuilder;
use crate::CliError;

/// Settings shared by every subcommand.
pub struct Globals {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub concurrency: usize,
    pub cache_dir: Option<PathBuf>,
    pub config_path: Option<PathBuf>,
    pub config: FileConfig,
}

impl Globals {
    pub fn load(
        output_dir: PathBuf,
        seed: u64,
        concurrency: usize,
        cache_dir: Option<PathBuf>,
        config_path: Option<PathBuf>,
    ) -> Result<Self> {
        let config = config::load(config_path.as_deref())?;
        Ok(Self {
            output_dir,
            seed,
            concurrency,
            cache_dir,
            config_path,
            config,
        })
    }

    fn extraction_config(&self) -> ExtractionConfig {
        self.config
            .extraction
            .to_extraction_config(self.cache_dir.clone())
    }

    fn manifest(&self, subcommand: &str) -> ManifestBuilder {
        ManifestBuilder::new(subcommand, self.config_path.as_deref(), self.seed)
    }
}

/// Build the requested backend. The rule backend performs no network I/O.
pub fn make_backend(
    kind: &str,
    config: &ExtractionConfig,
) -> Result<Arc<dyn ExtractionBackend>> {
    match kind {
        "rule" => Ok(Arc::new(RuleBasedBackend::new())),
        "remote" => {
            ensure!(
                !config.endpoint.is_empty(),
                CliError::Config(
                    "remote backend needs [extraction].endpoint in the config file".to_string()
                )
            );
            let backend = RemoteLlmBackend::new(config.clone())
                .map_err(|e| CliError::Backend(e.to_string()))?;
            Ok(Arc::new(backend))
        }
        other => Err(CliError::Config(format!(
            "unknown backend {other:?}; expected rule or remote"
        ))
        .into()),
    }
}

/// One raw (uncleaned) report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawReportRecord {
    pub report_id: String,
    pub text: String,
}

/// prep: clean raw reports into sections; optionally also emit merged and
/// normalized findings ready for extraction (non-informative reports are
/// dropped there).
#[allow(clippy::too_many_arguments)]
pub fn run_prep(
    globals: &Globals,
    input: &Path,
    era: Era,
    backend_kind: &str,
    output: Option<PathBuf>,
    findings_out: Option<PathBuf>,
) -> Result<()> {
    let mut manifest = globals.manifest("prep");
    manifest.add_input(input);
    let records: Vec<RawReportRecord> = read_jsonl(input)?;
    let extraction_config = globals.extraction_config();
    let backend = make_backend(backend_kind, &extraction_config)?;

    let sectioned: Vec<SectionedReport> = parallel_map(&records, globals.concurrency, |record| {
        clean_report(&record.report_id, &record.text, era, backend.as_ref())
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let output = output.unwrap_or_else(|| globals.output_dir.join("sectioned.jsonl"));
    std::fs::create_dir_all(globals.output_dir.as_path())?;
    write_jsonl(&output, &sectioned)?;
    eprintln!("prep: wrote {} sectioned reports to {}", sectioned.len(), output.display());

    if let Some(findings_out) = findings_out {
        let merged: Vec<Result<String, radlt::reportprep::PrepError>> =
            parallel_map(&sectioned, globals.concurrency, |report| {
                merge_impression_into_findings(report, backend.as_ref())
            });
        let mut findings = Vec::new();
        let mut filtered = 0usize;
        for (report, merged) in sectioned.iter().zip(merged) {
            match normalize_short_report(&merged?) {
                ShortReportOutcome::Keep(text) | ShortReportOutcome::Templated(text) => {
                    findings.push(FindingsRecord {
                        report_id: report.report_id.clone(),
                        findings: text,
                    });
                }
                ShortReportOutcome::Filtered => filtered += 1,
            }
        }
        write_jsonl(&findings_out, &findings)?;
        eprintln!(
            "prep: wrote {} findings ({} filtered) to {}",
            findings.len(),
            filtered,
            findings_out.display()
        );
    }
    manifest.write(&globals.output_dir)?;
    Ok(())
}

/// extract: findings JSONL in, structured-report JSONL out.
pub fn run_extract(
    globals: &Globals,
    input: &Path,
    output: Option<PathBuf>,
    backend_kind: &str,
    prompt_version: &str,
) -> Result<()> {
    ensure!(
        prompt_version == radlt::prompts::PROMPT_VERSION,
        CliError::Config(format!(
            "unknown prompt version {prompt_version:?}; this build ships {}",
            radlt::prompts::PROMPT_VERSION
        ))
    );
    let mut manifest = globals.manifest("extract");
    manifest.add_input(input);
    let records: Vec<FindingsRecord> = read_jsonl(input)?;
    let extraction_config = globals.extraction_config();
    let backend = make_backend(backend_kind, &extraction_config)?;
    let reports = extract_corpus(
        &records,
        backend.as_ref(),
        &extraction_config,
        globals.concurrency,
    )?;
    let output = output.unwrap_or_else(|| globals.output_dir.join("structured.jsonl"));
    std::fs::create_dir_all(globals.output_dir.as_path())?;
    write_jsonl(&output, &reports)?;
    eprintln!(
        "extract: wrote {} structured reports to {} ({} backend calls)",
        reports.len(),
        output.display(),
        backend.calls()
    );
    manifest.write(&globals.output_dir)?;
    Ok(())
}

fn findings_map(path: &Path) -> Result<HashMap<String, String>> {
    let records: Vec<FindingsRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .map(|r| (r.report_id, r.findings))
        .collect())
}

/// eval: the full metric battery over aligned prediction/reference corpora.
#[allow(clippy::too_many_arguments)]
pub fn run_eval(
    globals: &Globals,
    pred: &Path,
    reference: &Path,
    pred_text: Option<&Path>,
    ref_text: Option<&Path>,
    external: Option<&Path>,
    n_bootstrap: usize,
    percent: bool,
    output: Option<PathBuf>,
) -> Result<MetricReport> {
    let mut manifest = globals.manifest("eval");
    manifest.add_input(pred);
    manifest.add_input(reference);
    let pred_reports: Vec<StructuredLTReport> = read_jsonl(pred)?;
    let ref_reports: Vec<StructuredLTReport> = read_jsonl(reference)?;
    let aligned = align_corpora(&pred_reports, &ref_reports)?;

    let texts = match (pred_text, ref_text) {
        (Some(p), Some(r)) => {
            manifest.add_input(p);
            manifest.add_input(r);
            let pred_map = findings_map(p)?;
            let ref_map = findings_map(r)?;
            let mut pairs = Vec::with_capacity(aligned.len());
            for (_, reference) in &aligned {
                let id = reference.report_id();
                let (Some(pt), Some(rt)) = (pred_map.get(id), ref_map.get(id)) else {
                    return Err(CliError::IdMismatch(format!(
                        "report text missing for {id:?}"
                    ))
                    .into());
                };
                pairs.push((pt.clone(), rt.clone()));
            }
            Some(pairs)
        }
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "--pred-text and --ref-text must be given together".to_string(),
            )
            .into())
        }
    };

    let eval_config = EvalConfig {
        n_bootstrap,
        seed: globals.seed,
    };
    let mut report = evaluate_corpus(&aligned, texts.as_deref(), &eval_config)?;

    if let Some(external_path) = external {
        manifest.add_input(external_path);
        let scores = adapters::ingest_external_scores(external_path)?;
        let ids: Vec<&str> = aligned.iter().map(|(_, r)| r.report_id()).collect();
        let mut extra = scores.metric_results(
            &ids,
            &adapters::CHEXPERT_FIVE,
            n_bootstrap,
            globals.seed,
        )?;
        report.metrics.append(&mut extra);
    }

    let output = output.unwrap_or_else(|| globals.output_dir.join("metrics.json"));
    std::fs::create_dir_all(globals.output_dir.as_path())?;
    let tmp = output.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&report)?)?;
    std::fs::rename(&tmp, &output)?;
    println!("{}", report.render_table(percent));
    eprintln!("eval: wrote {}", output.display());
    manifest.write(&globals.output_dir)?;
    Ok(report)
}

/// One report's text with its source, for sentence counting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportTextRecord {
    pub study_id: String,
    pub source: Source,
    pub text: String,
}

/// Optional per-study covariates for stratified tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateRecord {
    pub study_id: String,
    #[serde(default)]
    pub numeric: HashMap<String, f64>,
    #[serde(default)]
    pub categorical: HashMap<String, String>,
}

fn scoped<'a>(
    records: &'a [RatingRecord],
    source: Option<Source>,
    cohort: Option<studystats::Cohort>,
) -> Vec<RatingRecord> {
    records
        .iter()
        .filter(|r| source.map_or(true, |s| r.source == s))
        .filter(|r| cohort.map_or(true, |c| r.cohort == c))
        .cloned()
        .collect()
}

/// study-stats: the full reader-study battery as one JSON document plus
/// formatted tables on stdout.
pub fn run_study(
    globals: &Globals,
    ratings: &Path,
    report_texts: Option<&Path>,
    covariates: Option<&Path>,
    n_bootstrap: usize,
    backend_kind: &str,
    output: Option<PathBuf>,
) -> Result<serde_json::Value> {
    let mut manifest = globals.manifest("study-stats");
    manifest.add_input(ratings);
    let records: Vec<RatingRecord> = read_jsonl(ratings)?;
    validate_records(&records)?;

    let seed = globals.seed;
    let scopes: [(&str, Option<Source>, Option<studystats::Cohort>); 5] = [
        ("all", None, None),
        ("original", Some(Source::Original), None),
        ("ai_generated", Some(Source::AiGenerated), None),
        ("target", None, Some(studystats::Cohort::Target)),
        ("lt", None, Some(studystats::Cohort::Lt)),
    ];

    let mut proportions: Vec<MetricResult> = Vec::new();
    type Predicate = fn(&RatingRecord) -> bool;
    let battery: [(&str, Predicate); 6] = [
        ("no_critical_errors", |r| r.score >= 2),
        ("no_changes_needed", |r| r.score == 3),
        ("any_omission", |r| r.omission_count() >= 1),
        ("multiple_omissions", |r| r.omission_count() >= 2),
        ("any_sentence_error", |r| r.sentence_error_count() >= 1),
        ("multiple_sentence_errors", |r| r.sentence_error_count() >= 2),
    ];
    for (scope, source, cohort) in scopes {
        let subset = scoped(&records, source, cohort);
        if subset.iter().all(|r| r.flagged_unreadable) || subset.is_empty() {
            continue;
        }
        for (name, predicate) in battery {
            proportions.push(proportion(
                &format!("{name}/{scope}"),
                &subset,
                predicate,
                n_bootstrap,
                seed,
            )?);
        }
    }

    if let Some(texts_path) = report_texts {
        manifest.add_input(texts_path);
        let texts: Vec<ReportTextRecord> = read_jsonl(texts_path)?;
        let counts: HashMap<(String, Source), usize> = texts
            .into_iter()
            .map(|t| {
                let n = radlt::extraction::grammar::split_sentences(&t.text).len();
                ((t.study_id, t.source), n)
            })
            .collect();
        for (scope, source, cohort) in scopes {
            let subset = scoped(&records, source, cohort);
            if subset.iter().all(|r| r.flagged_unreadable) || subset.is_empty() {
                continue;
            }
            proportions.push(sentence_acceptable_rate(
                &format!("sentences_acceptable/{scope}"),
                &subset,
                &counts,
                n_bootstrap,
                seed,
            )?);
        }
    }

    let readable: Vec<&RatingRecord> =
        records.iter().filter(|r| !r.flagged_unreadable).collect();
    let values = |source: Source, predicate: Predicate| -> Vec<f64> {
        readable
            .iter()
            .filter(|r| r.source == source)
            .map(|r| predicate(r) as u8 as f64)
            .collect()
    };
    let mut permutation_tests = Vec::new();
    for (name, predicate) in [
        ("no_critical_errors", battery[0].1),
        ("no_changes_needed", battery[1].1),
    ] {
        let a = values(Source::Original, predicate);
        let b = values(Source::AiGenerated, predicate);
        if !a.is_empty() && !b.is_empty() {
            let p = studystats::permutation_test(&a, &b, 10_000, seed)?;
            permutation_tests.push(json!({
                "name": format!("{name}/original_vs_ai_generated"),
                "n_permutations": 10_000,
                "p_value": p,
            }));
        }
    }
    for (name, score) in [("score_1_rate", 1u8), ("score_2_rate", 2u8)] {
        let by = |seniority: studystats::Seniority| -> Vec<f64> {
            readable
                .iter()
                .filter(|r| r.reviewer_seniority == seniority)
                .map(|r| (r.score == score) as u8 as f64)
                .collect()
        };
        let a = by(studystats::Seniority::Senior);
        let b = by(studystats::Seniority::Resident);
        if !a.is_empty() && !b.is_empty() {
            let p = studystats::permutation_test(&a, &b, 10_000, seed)?;
            permutation_tests.push(json!({
                "name": format!("{name}/senior_vs_resident"),
                "n_permutations": 10_000,
                "p_value": p,
            }));
        }
    }

    let mut concordance = serde_json::Map::new();
    for (setting, filter) in [
        ("combined", None),
        ("original", Some(Source::Original)),
        ("ai_generated", Some(Source::AiGenerated)),
    ] {
        let matrices = rating_matrices(&records, filter);
        let mut groups = Vec::new();
        let mut ws = Vec::new();
        for (triple, matrix) in &matrices {
            match kendalls_w(matrix) {
                Ok(w) => {
                    ws.push(w);
                    groups.push(json!({
                        "raters": triple,
                        "n_items": matrix.n_items(),
                        "w": w,
                    }));
                }
                Err(_) => groups.push(json!({
                    "raters": triple,
                    "n_items": matrix.n_items(),
                    "w": serde_json::Value::Null,
                })),
            }
        }
        let average = (!ws.is_empty()).then(|| ws.iter().sum::<f64>() / ws.len() as f64);
        concordance.insert(
            setting.to_string(),
            json!({ "groups": groups, "average": average }),
        );
    }

    let agreement = error_agreement(&records)?;

    // Error categorization (deterministic with the rule backend).
    let extraction_config = globals.extraction_config();
    let backend = make_backend(backend_kind, &extraction_config)?;
    let mut category_counts: HashMap<(Source, studystats::ErrorCategory), usize> = HashMap::new();
    for record in &readable {
        for edit in &record.edits {
            let category = classify_error_category(&edit.corrected_text, backend.as_ref())?;
            *category_counts.entry((record.source, category)).or_default() += 1;
        }
    }
    let count = |source, category| -> usize {
        category_counts.get(&(source, category)).copied().unwrap_or(0)
    };
    use studystats::ErrorCategory::*;
    let table: Vec<Vec<f64>> = vec![
        vec![
            count(Source::Original, Pathological) as f64,
            count(Source::Original, LinesTubes) as f64,
            count(Source::Original, Other) as f64,
        ],
        vec![
            count(Source::AiGenerated, Pathological) as f64,
            count(Source::AiGenerated, LinesTubes) as f64,
            count(Source::AiGenerated, Other) as f64,
        ],
    ];
    let chi = studystats::chi_squared(&table).ok();
    let error_categories = json!({
        "counts": {
            "original": {"pathological": table[0][0], "lines_tubes": table[0][1], "other": table[0][2]},
            "ai_generated": {"pathological": table[1][0], "lines_tubes": table[1][1], "other": table[1][2]},
        },
        "chi_squared": chi.map(|(stat, p)| json!({"statistic": stat, "p_value": p})),
    });

    // Stratified tests over covariates.
    let mut covariate_tests = Vec::new();
    if let Some(cov_path) = covariates {
        manifest.add_input(cov_path);
        let cov_records: Vec<CovariateRecord> = read_jsonl(cov_path)?;
        let by_study: HashMap<&str, &CovariateRecord> = cov_records
            .iter()
            .map(|c| (c.study_id.as_str(), c))
            .collect();
        let mut numeric_keys: Vec<String> = cov_records
            .iter()
            .flat_map(|c| c.numeric.keys().cloned())
            .collect();
        numeric_keys.sort();
        numeric_keys.dedup();
        let mut categorical_keys: Vec<String> = cov_records
            .iter()
            .flat_map(|c| c.categorical.keys().cloned())
            .collect();
        categorical_keys.sort();
        categorical_keys.dedup();

        for source in [Source::Original, Source::AiGenerated] {
            let subset: Vec<&&RatingRecord> =
                readable.iter().filter(|r| r.source == source).collect();
            if subset.is_empty() {
                continue;
            }
            for key in &numeric_keys {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for record in &subset {
                    if let Some(value) = by_study
                        .get(record.study_id.as_str())
                        .and_then(|c| c.numeric.get(key))
                    {
                        xs.push(*value);
                        ys.push(record.score as f64);
                    }
                }
                if xs.len() >= 2 {
                    if let Ok((tau, p)) = studystats::kendalls_tau(&xs, &ys) {
                        covariate_tests.push(json!({
                            "covariate": key,
                            "source": source.as_str(),
                            "test": "kendalls_tau",
                            "statistic": tau,
                            "p_value": p,
                        }));
                    }
                }
            }
            for key in &categorical_keys {
                let mut groups: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
                for record in &subset {
                    if let Some(value) = by_study
                        .get(record.study_id.as_str())
                        .and_then(|c| c.categorical.get(key))
                    {
                        groups.entry(value).or_default().push(record.score as f64);
                    }
                }
                let groups: Vec<Vec<f64>> = groups.into_values().collect();
                if groups.len() >= 2 {
                    if let Ok((h, p)) = studystats::kruskal_wallis(&groups) {
                        covariate_tests.push(json!({
                            "covariate": key,
                            "source": source.as_str(),
                            "test": "kruskal_wallis",
                            "statistic": h,
                            "p_value": p,
                        }));
                    }
                }
            }
        }
    }

    let battery = json!({
        "proportions": proportions,
        "permutation_tests": permutation_tests,
        "kendalls_w": concordance,
        "error_agreement": agreement,
        "error_categories": error_categories,
        "covariate_tests": covariate_tests,
        "n_bootstrap": n_bootstrap,
        "seed": seed,
    });

    let output = output.unwrap_or_else(|| globals.output_dir.join("study_stats.json"));
    std::fs::create_dir_all(globals.output_dir.as_path())?;
    let tmp = output.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&battery)?)?;
    std::fs::rename(&tmp, &output)?;

    // Human-readable summary.
    println!("proportions (value [95% CI], support):");
    for m in &proportions {
        println!(
            "  {:42} {:.3} [{:.3}, {:.3}]  n={}",
            m.name, m.value, m.ci_low, m.ci_high, m.support
        );
    }
    println!("\ncorrection agreement:");
    for row in &agreement.rows {
        println!(
            "  {:12} single {:4} ({:5.1}%)  multiple {:4} ({:5.1}%)  total {:4}",
            row.scope,
            row.single_reviewer,
            row.single_pct * 100.0,
            row.multiple_reviewers,
            row.multiple_pct * 100.0,
            row.total
        );
    }
    eprintln!("study-stats: wrote {}", output.display());
    manifest.write(&globals.output_dir)?;
    Ok(battery)
}

/// synth: paired findings/ground-truth JSONL from a spec file.
pub fn run_synth(
    globals: &Globals,
    spec_path: Option<&Path>,
    count: Option<usize>,
    findings_out: Option<PathBuf>,
    gt_out: Option<PathBuf>,
) -> Result<()> {
    let mut manifest = globals.manifest("synth");
    let stage = match spec_path {
        Some(path) => {
            manifest.add_input(path);
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<config::SynthStage>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => config::SynthStage::default(),
    };
    let count = count.unwrap_or(stage.count);
    let template = CaseSpec {
        seed: 0,
        min_instances: stage.min_instances,
        max_instances: stage.max_instances,
        incorrect_placement_rate: stage.incorrect_placement_rate,
        include_normal_filler: stage.include_normal_filler,
        ..Default::default()
    };
    let cases = generate_corpus(&template, count, globals.seed)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let findings: Vec<FindingsRecord> = cases
        .iter()
        .map(|(gt, text)| FindingsRecord {
            report_id: gt.report_id().to_string(),
            findings: text.clone(),
        })
        .collect();
    let gts: Vec<&StructuredLTReport> = cases.iter().map(|(gt, _)| gt).collect();
    let findings_out = findings_out.unwrap_or_else(|| globals.output_dir.join("findings.jsonl"));
    let gt_out = gt_out.unwrap_or_else(|| globals.output_dir.join("reference.jsonl"));
    std::fs::create_dir_all(globals.output_dir.as_path())?;
    write_jsonl(&findings_out, &findings)?;
    write_jsonl(&gt_out, &gts)?;
    eprintln!(
        "synth: wrote {count} cases to {} and {}",
        findings_out.display(),
        gt_out.display()
    );
    manifest.write(&globals.output_dir)?;
    Ok(())
}

/// run: the config-driven synth/ingest -> extract -> eval pipeline.
/// Returns the metrics file path.
pub fn run_pipeline(globals: &Globals) -> Result<PathBuf> {
    let pipeline = globals
        .config
        .pipeline
        .clone()
        .ok_or_else(|| CliError::Config("config file has no [pipeline] section".to_string()))?;
    let mut manifest = globals.manifest("run");
    std::fs::create_dir_all(globals.output_dir.as_path())?;

    let (findings_path, reference_path) = match (&pipeline.synth, &pipeline.findings) {
        (Some(synth), _) => {
            let template = CaseSpec {
                seed: 0,
                min_instances: synth.min_instances,
                max_instances: synth.max_instances,
                incorrect_placement_rate: synth.incorrect_placement_rate,
                include_normal_filler: synth.include_normal_filler,
                ..Default::default()
            };
            let cases = generate_corpus(&template, synth.count, globals.seed)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let findings: Vec<FindingsRecord> = cases
                .iter()
                .map(|(gt, text)| FindingsRecord {
                    report_id: gt.report_id().to_string(),
                    findings: text.clone(),
                })
                .collect();
            let gts: Vec<&StructuredLTReport> = cases.iter().map(|(gt, _)| gt).collect();
            let findings_path = globals.output_dir.join("findings.jsonl");
            let reference_path = globals.output_dir.join("reference.jsonl");
            write_jsonl(&findings_path, &findings)?;
            write_jsonl(&reference_path, &gts)?;
            (findings_path, reference_path)
        }
        (None, Some(findings)) => {
            let reference = pipeline.reference.clone().ok_or_else(|| {
                CliError::Config("pipeline needs `reference` when `findings` is given".to_string())
            })?;
            (findings.clone(), reference)
        }
        (None, None) => {
            return Err(CliError::Config(
                "pipeline needs either a [pipeline.synth] stage or `findings`/`reference` paths"
                    .to_string(),
            )
            .into())
        }
    };
    manifest.add_input(&findings_path);
    manifest.add_input(&reference_path);

    let pred_path = globals.output_dir.join("structured.jsonl");
    run_extract(
        globals,
        &findings_path,
        Some(pred_path.clone()),
        &pipeline.extract.backend,
        radlt::prompts::PROMPT_VERSION,
    )?;

    let metrics_path = globals.output_dir.join("metrics.json");
    run_eval(
        globals,
        &pred_path,
        &reference_path,
        Some(&findings_path),
        Some(&findings_path),
        None,
        pipeline.eval.n_bootstrap,
        pipeline.eval.percent,
        Some(metrics_path.clone()),
    )?;
    manifest.write(&globals.output_dir)?;
    Ok(metrics_path)
}

/// selftest: synth -> extract(rule) -> eval must come back all-ones, with
/// zero network attempts.
pub fn run_selftest(globals: &Globals, cases: usize) -> Result<()> {
    let template = CaseSpec::default();
    let generated = generate_corpus(&template, cases, globals.seed)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let backend = RuleBasedBackend::new();
    let extraction_config = globals.extraction_config();
    let records: Vec<FindingsRecord> = generated
        .iter()
        .map(|(gt, text)| FindingsRecord {
            report_id: gt.report_id().to_string(),
            findings: text.clone(),
        })
        .collect();
    let preds = extract_corpus(&records, &backend, &extraction_config, globals.concurrency)?;
    let refs: Vec<StructuredLTReport> = generated.into_iter().map(|(gt, _)| gt).collect();
    let aligned = align_corpora(&preds, &refs)?;
    let texts: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.findings.clone(), r.findings.clone()))
        .collect();
    let report = evaluate_corpus(
        &aligned,
        Some(&texts),
        &EvalConfig {
            n_bootstrap: 0,
            seed: globals.seed,
        },
    )?;
    let mut failures = Vec::new();
    for metric in &report.metrics {
        let ok = metric.value == 1.0;
        println!(
            "selftest {:34} {} ({})",
            metric.name,
            if ok { "PASS" } else { "FAIL" },
            metric.value
        );
        if !ok {
            failures.push(metric.name.clone());
        }
    }
    for absent in &report.absent {
        println!("selftest {:34} ABSENT ({})", absent.name, absent.reason);
    }
    let attempts = radlt::extraction::remote::network_attempts();
    println!(
        "selftest network_attempts               {} ({attempts})",
        if attempts == 0 { "PASS" } else { "FAIL" }
    );
    ensure!(
        failures.is_empty() && attempts == 0,
        CliError::Validation(format!("selftest failures: {failures:?}"))
    );
    println!("selftest: PASS ({cases} cases)");
    Ok(())
}

/// Bounded-concurrency map that preserves input order.
fn parallel_map<T: Sync, R: Send, F: Fn(&T) -> R + Sync>(
    items: &[T],
    concurrency: usize,
    f: F,
) -> Vec<R> {
    let concurrency = concurrency.max(1).min(items.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<R>>> =
        items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..concurrency {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= items.len() {
                    break;
                }
                *slots[idx].lock().unwrap() = Some(f(&items[idx]));
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}
