//! End-to-end checks of the binary: subcommand flows, the exit-code table,
//! and run manifests.

use std::path::Path;
use std::process::Command;

use tempfile::tempdir;

fn radlt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_radlt"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn selftest_exits_zero() {
    let dir = tempdir().unwrap();
    let output = radlt()
        .args(["--output-dir", dir.path().to_str().unwrap(), "selftest", "--cases", "40"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("selftest: PASS"));
}

#[test]
fn prep_extract_eval_flow() {
    let dir = tempdir().unwrap();
    let out = dir.path();
    let raw = out.join("raw.jsonl");
    write(
        &raw,
        r#"{"report_id":"a","text":"FINDINGS: New left chest tube with tip in the lower hemithorax. IMPRESSION: Left chest tube in place."}
{"report_id":"b","text":"IMPRESSION: Clear lungs. 2011-02-21"}
"#,
    );
    let status = radlt()
        .args([
            "--output-dir",
            out.to_str().unwrap(),
            "prep",
            "--input",
            raw.to_str().unwrap(),
            "--era",
            "post_epic",
            "--findings-out",
        ])
        .arg(out.join("findings.jsonl"))
        .status()
        .unwrap();
    assert!(status.success());

    // Report b is a short normal report: templated, not dropped.
    let findings = std::fs::read_to_string(out.join("findings.jsonl")).unwrap();
    assert_eq!(findings.lines().count(), 2);
    assert!(findings.contains("The lungs are clear. Normal cardiomediastinal silhouette."));

    let status = radlt()
        .args([
            "--output-dir",
            out.to_str().unwrap(),
            "extract",
            "--input",
        ])
        .arg(out.join("findings.jsonl"))
        .status()
        .unwrap();
    assert!(status.success());
    let structured = std::fs::read_to_string(out.join("structured.jsonl")).unwrap();
    assert_eq!(structured.lines().count(), 2);
    assert!(structured.contains("Chest Tube"));

    // Evaluating predictions against themselves is the identity.
    let output = radlt()
        .args(["--output-dir", out.to_str().unwrap(), "eval", "--pred"])
        .arg(out.join("structured.jsonl"))
        .arg("--ref")
        .arg(out.join("structured.jsonl"))
        .args(["--n-bootstrap", "50"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for metric in metrics["metrics"].as_array().unwrap() {
        assert_eq!(metric["value"], 1.0, "{}", metric["name"]);
    }

    // Manifests were written for each stage.
    for name in ["manifest-prep.json", "manifest-extract.json", "manifest-eval.json"] {
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(name)).unwrap()).unwrap();
        assert_eq!(manifest["prompt_version"], "v1");
        assert!(manifest["input_digests"].as_object().is_some());
    }
}

#[test]
fn exit_code_config_error() {
    let dir = tempdir().unwrap();
    // Missing config file.
    let status = radlt()
        .args([
            "--output-dir",
            dir.path().to_str().unwrap(),
            "--config",
            "/nonexistent/config.toml",
            "selftest",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Unknown backend name.
    let findings = dir.path().join("findings.jsonl");
    write(&findings, r#"{"report_id":"a","findings":"The lungs are clear."}"#);
    let status = radlt()
        .args([
            "--output-dir",
            dir.path().to_str().unwrap(),
            "extract",
            "--input",
            findings.to_str().unwrap(),
            "--backend",
            "banana",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Remote backend without an endpoint.
    let status = radlt()
        .args([
            "--output-dir",
            dir.path().to_str().unwrap(),
            "extract",
            "--input",
            findings.to_str().unwrap(),
            "--backend",
            "remote",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn exit_code_backend_error() {
    let dir = tempdir().unwrap();
    let findings = dir.path().join("findings.jsonl");
    write(&findings, r#"{"report_id":"a","findings":"New left chest tube."}"#);
    let config = dir.path().join("config.toml");
    // A closed port: transport errors until retries are exhausted.
    write(
        &config,
        "[extraction]\nendpoint = \"http://127.0.0.1:9\"\nmodel_name = \"m\"\n\
         max_retries = 0\ninitial_backoff_ms = 1\nrequest_timeout_secs = 2\n",
    );
    let status = radlt()
        .args([
            "--output-dir",
            dir.path().to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "extract",
            "--input",
            findings.to_str().unwrap(),
            "--backend",
            "remote",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn exit_code_validation_error() {
    let dir = tempdir().unwrap();
    let ratings = dir.path().join("ratings.jsonl");
    // Score 3 with an edit violates the score-edit consistency rules.
    write(
        &ratings,
        r#"{"study_id":"s","reviewer_id":"r","reviewer_seniority":"senior","source":"original","score":3,"edits":[{"kind":"modify","severity":1,"sentence_index":0,"corrected_text":"x"}],"cohort":"target"}"#,
    );
    let status = radlt()
        .args([
            "--output-dir",
            dir.path().to_str().unwrap(),
            "study-stats",
            "--ratings",
            ratings.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn exit_code_id_mismatch() {
    let dir = tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    let reference = dir.path().join("ref.jsonl");
    write(&pred, r#"{"report_id":"a","instances":[]}"#);
    write(&reference, r#"{"report_id":"b","instances":[]}"#);
    let status = radlt()
        .args([
            "--output-dir",
            dir.path().to_str().unwrap(),
            "eval",
            "--pred",
            pred.to_str().unwrap(),
            "--ref",
            reference.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(5));
}

#[test]
fn synth_emits_paired_corpora() {
    let dir = tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write(
        &spec,
        r#"{"count": 25, "min_instances": 1, "max_instances": 3, "incorrect_placement_rate": 0.3, "include_normal_filler": true}"#,
    );
    let status = radlt()
        .args([
            "--output-dir",
            dir.path().to_str().unwrap(),
            "--seed",
            "5",
            "synth",
            "--spec",
            spec.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let findings = std::fs::read_to_string(dir.path().join("findings.jsonl")).unwrap();
    let reference = std::fs::read_to_string(dir.path().join("reference.jsonl")).unwrap();
    assert_eq!(findings.lines().count(), 25);
    assert_eq!(reference.lines().count(), 25);

    // Identical invocation reproduces identical bytes.
    let second = tempdir().unwrap();
    let status = radlt()
        .args([
            "--output-dir",
            second.path().to_str().unwrap(),
            "--seed",
            "5",
            "synth",
            "--spec",
            spec.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        findings,
        std::fs::read_to_string(second.path().join("findings.jsonl")).unwrap()
    );
}

#[test]
fn failed_stage_preserves_existing_outputs() {
    let dir = tempdir().unwrap();
    let out = dir.path();
    let findings = out.join("findings.jsonl");
    write(&findings, r#"{"report_id":"a","findings":"The lungs are clear."}"#);
    let status = radlt()
        .args([
            "--output-dir",
            out.to_str().unwrap(),
            "extract",
            "--input",
            findings.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let before = std::fs::read_to_string(out.join("structured.jsonl")).unwrap();

    // A failing follow-up stage (bad input path) leaves the artifact alone.
    let status = radlt()
        .args([
            "--output-dir",
            out.to_str().unwrap(),
            "extract",
            "--input",
            out.join("missing.jsonl").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(!status.success());
    let after = std::fs::read_to_string(out.join("structured.jsonl")).unwrap();
    assert_eq!(before, after);
}
