use std::path::PathBuf;

use clap::{Parser, Subcommand};

use radlt::reportprep::Era;
use radlt_cli::ops::{self, Globals};

#[derive(Parser)]
#[command(
    name = "radlt",
    version,
    about = "Structured lines-and-tubes evaluation for chest X-ray reports"
)]
struct Cli {
    /// Directory for outputs and run manifests.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Base seed for every randomized operation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Bound on in-flight backend requests.
    #[arg(long, global = true, default_value_t = 4)]
    concurrency: usize,
    /// Extraction result cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// TOML config file (remote endpoint, pipeline stages).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean raw reports into sections; optionally emit extraction-ready findings.
    Prep {
        /// Raw report JSONL: {"report_id", "text"}.
        #[arg(long)]
        input: PathBuf,
        /// Which cleaning prompt to use.
        #[arg(long, value_parser = parse_era)]
        era: Era,
        /// rule | remote.
        #[arg(long, default_value = "rule")]
        backend: String,
        /// Sectioned-report JSONL output (default <output-dir>/sectioned.jsonl).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write merged+normalized findings JSONL here.
        #[arg(long)]
        findings_out: Option<PathBuf>,
    },
    /// Two-stage structured-report extraction from findings JSONL.
    Extract {
        /// Findings JSONL: {"report_id", "findings"}.
        #[arg(long)]
        input: PathBuf,
        /// Structured-report JSONL output (default <output-dir>/structured.jsonl).
        #[arg(long)]
        output: Option<PathBuf>,
        /// rule | remote.
        #[arg(long, default_value = "rule")]
        backend: String,
        /// Prompt asset version to run with.
        #[arg(long, default_value = radlt::prompts::PROMPT_VERSION)]
        prompt_version: String,
    },
    /// Metric battery over aligned prediction/reference corpora.
    Eval {
        /// Predicted structured-report JSONL.
        #[arg(long)]
        pred: PathBuf,
        /// Reference structured-report JSONL.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Predicted report texts (for ROUGE-L), findings JSONL.
        #[arg(long)]
        pred_text: Option<PathBuf>,
        /// Reference report texts (for ROUGE-L), findings JSONL.
        #[arg(long)]
        ref_text: Option<PathBuf>,
        /// Externally computed clinical-efficacy scores JSONL.
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        n_bootstrap: usize,
        /// Render values as percentages.
        #[arg(long)]
        percent: bool,
        /// Metric JSON output (default <output-dir>/metrics.json).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Reader-study statistics from rating records.
    StudyStats {
        /// Rating record JSONL.
        #[arg(long)]
        ratings: PathBuf,
        /// Report texts JSONL for sentence counts: {"study_id","source","text"}.
        #[arg(long)]
        report_texts: Option<PathBuf>,
        /// Per-study covariates JSONL for stratified tests.
        #[arg(long)]
        covariates: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n_bootstrap: usize,
        /// Backend for error categorization: rule | remote.
        #[arg(long, default_value = "rule")]
        backend: String,
        /// Battery JSON output (default <output-dir>/study_stats.json).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Paired synthetic findings/ground-truth corpora from a spec file.
    Synth {
        /// Spec JSON; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Number of cases (overrides the spec's count).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        findings_out: Option<PathBuf>,
        #[arg(long)]
        gt_out: Option<PathBuf>,
    },
    /// Config-driven pipeline: synth/ingest -> extract -> eval.
    Run,
    /// Offline round-trip self-check: every supported metric must be 1.0.
    Selftest {
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
}

fn parse_era(text: &str) -> Result<Era, String> {
    match text {
        "pre_epic" | "pre" => Ok(Era::PreEpic),
        "post_epic" | "post" => Ok(Era::PostEpic),
        other => Err(format!("unknown era {other:?}; expected pre_epic or post_epic")),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let globals = Globals::load(
        cli.output_dir,
        cli.seed,
        cli.concurrency,
        cli.cache_dir,
        cli.config,
    )?;
    match cli.command {
        Command::Prep {
            input,
            era,
            backend,
            output,
            findings_out,
        } => ops::run_prep(&globals, &input, era, &backend, output, findings_out),
        Command::Extract {
            input,
            output,
            backend,
            prompt_version,
        } => ops::run_extract(&globals, &input, output, &backend, &prompt_version),
        Command::Eval {
            pred,
            reference,
            pred_text,
            ref_text,
            external,
            n_bootstrap,
            percent,
            output,
        } => ops::run_eval(
            &globals,
            &pred,
            &reference,
            pred_text.as_deref(),
            ref_text.as_deref(),
            external.as_deref(),
            n_bootstrap,
            percent,
            output,
        )
        .map(|_| ()),
        Command::StudyStats {
            ratings,
            report_texts,
            covariates,
            n_bootstrap,
            backend,
            output,
        } => ops::run_study(
            &globals,
            &ratings,
            report_texts.as_deref(),
            covariates.as_deref(),
            n_bootstrap,
            &backend,
            output,
        )
        .map(|_| ()),
        Command::Synth {
            spec,
            count,
            findings_out,
            gt_out,
        } => ops::run_synth(&globals, spec.as_deref(), count, findings_out, gt_out),
        Command::Run => ops::run_pipeline(&globals).map(|_| ()),
        Command::Selftest { cases } => ops::run_selftest(&globals, cases),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(radlt_cli::exit_code(&err));
    }
}
