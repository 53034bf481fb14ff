//! Two-stage structured-report extraction over pluggable backends.
//!
//! Stage 1 establishes which L&T types a findings text mentions; stage 2
//! runs one type-specific pass per mention and validates the returned JSON
//! into [`LTInstance`]s. Backends are a remote chat-completions endpoint or
//! the deterministic rule-based grammar.

pub mod grammar;
pub mod remote;
pub mod rule;

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use remote::RemoteLlmBackend;
pub use rule::RuleBasedBackend;

use crate::prompts;
use crate::schema::{validate_structured_report, LTInstance, StructuredLTReport, ValidationError};

/// One stage-1 type mention with its supporting text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeMention {
    pub lt_type_name: String,
    pub reference_text: String,
}

/// Settings for backend calls and result caching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub endpoint: String,
    pub model_name: String,
    pub credential_env_var: String,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub temperature: f64,
    pub request_seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub request_timeout: Duration,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model_name: "rule".to_string(),
            credential_env_var: String::new(),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            temperature: 0.0,
            request_seed: Some(0),
            cache_dir: None,
            request_timeout: Duration::from_secs(60),
        }
    }
}

/// A request/response completion capability.
pub trait ExtractionBackend: Send + Sync {
    fn complete(&self, system_prompt: &str, user_content: &str) -> Result<String, BackendError>;
    fn name(&self) -> &str;
    /// Completed call count, for cache and no-network assertions.
    fn calls(&self) -> u64;
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("response missing expected fields: {0}")]
    BadResponseShape(String),
    #[error("backend does not recognize this prompt")]
    UnknownPrompt,
}

/// Per-type results salvaged from a partially failed extraction.
#[derive(Debug)]
pub struct PartialExtraction {
    pub completed: Vec<(String, Vec<LTInstance>)>,
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("malformed backend response ({detail}); raw payload attached")]
    MalformedResponse { detail: String, raw: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("extraction completed for {} type(s) but failed for {}: {:?}",
            .0.completed.len(), .0.failures.len(),
            .0.failures.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>())]
    Partial(PartialExtraction),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

/// Pull a JSON document out of a backend response: direct parse, then code
/// fences, then an outermost bracket scan.
pub fn parse_or_repair_json(raw: &str) -> Result<Value, ExtractError> {
    let trimmed = raw.trim();
    if let Ok(value) = serde_json::from_str(trimmed) {
        return Ok(value);
    }
    if let Some(stripped) = strip_code_fence(trimmed) {
        if let Ok(value) = serde_json::from_str(stripped.trim()) {
            return Ok(value);
        }
    }
    for open in ['[', '{'] {
        if let Some(slice) = outermost_balanced(trimmed, open) {
            if let Ok(value) = serde_json::from_str(slice) {
                return Ok(value);
            }
        }
    }
    Err(ExtractError::MalformedResponse {
        detail: "no parseable JSON document found".to_string(),
        raw: raw.to_string(),
    })
}

fn strip_code_fence(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')?;
    let body = &after[body_start + 1..];
    let end = body.rfind("```")?;
    Some(&body[..end])
}

/// The outermost balanced bracket pair starting with `open`, string-aware.
fn outermost_balanced(text: &str, open: char) -> Option<&str> {
    let close = if open == '[' { ']' } else { '}' };
    let start = text.find(open)?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            c if c == open => depth += 1,
            c if c == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + c.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Complete and parse as JSON, with one repair re-prompt on parse failure.
fn complete_json(
    backend: &dyn ExtractionBackend,
    system_prompt: &str,
    user_content: &str,
) -> Result<Value, ExtractError> {
    let raw = backend.complete(system_prompt, user_content)?;
    match parse_or_repair_json(&raw) {
        Ok(value) => Ok(value),
        Err(_) => {
            let retry_user = format!(
                "{user_content}\n\nYour previous response was not valid JSON. \
                 Respond again with only the JSON document."
            );
            let raw = backend.complete(system_prompt, &retry_user)?;
            parse_or_repair_json(&raw)
        }
    }
}

/// Stage 1: which types does the findings text mention. Deduplicated, one
/// mention per type, in the prompt's canonical type order.
pub fn extract_type_mentions(
    findings: &str,
    backend: &dyn ExtractionBackend,
) -> Result<Vec<TypeMention>, ExtractError> {
    let value = complete_json(backend, prompts::STAGE1_TYPES, findings)?;
    let array = value
        .as_array()
        .ok_or_else(|| ExtractError::MalformedResponse {
            detail: "stage-1 response is not a JSON array".to_string(),
            raw: value.to_string(),
        })?;
    let mut by_name: HashMap<&str, String> = HashMap::new();
    for entry in array {
        let name = entry
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| ExtractError::MalformedResponse {
                detail: "stage-1 entry missing \"type\"".to_string(),
                raw: entry.to_string(),
            })?;
        let canonical = prompts::STAGE1_TYPE_NAMES
            .iter()
            .find(|n| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| ExtractError::MalformedResponse {
                detail: format!("unknown stage-1 type name {name:?}"),
                raw: entry.to_string(),
            })?;
        let text = entry
            .get("reference_text")
            .and_then(Value::as_str)
            .unwrap_or_default();
        let slot = by_name.entry(canonical).or_default();
        if !slot.is_empty() && !text.is_empty() {
            slot.push(' ');
        }
        slot.push_str(text);
    }
    Ok(prompts::STAGE1_TYPE_NAMES
        .iter()
        .filter_map(|name| {
            by_name.remove(name).map(|reference_text| TypeMention {
                lt_type_name: name.to_string(),
                reference_text,
            })
        })
        .collect())
}

/// Stage 2: instances of one type from the findings text.
pub fn extract_instances_for_type(
    findings: &str,
    lt_type_name: &str,
    backend: &dyn ExtractionBackend,
) -> Result<Vec<LTInstance>, ExtractError> {
    let prompt = prompts::stage2_prompt(lt_type_name).ok_or_else(|| {
        ExtractError::MalformedResponse {
            detail: format!("{lt_type_name:?} is not a stage-1 type name"),
            raw: String::new(),
        }
    })?;
    let user = format!("Current Study:\n{findings}");
    let value = complete_json(backend, prompt, &user)?;
    let report = validate_structured_report("stage2", &value)?;
    Ok(report.instances().to_vec())
}

fn cache_key(findings: &str, config: &ExtractionConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompts::PROMPT_VERSION.as_bytes());
    hasher.update([0]);
    hasher.update(config.model_name.as_bytes());
    hasher.update([0]);
    hasher.update(findings.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_read(config: &ExtractionConfig, key: &str) -> Option<Vec<LTInstance>> {
    let dir = config.cache_dir.as_ref()?;
    let path = dir.join(format!("{key}.json"));
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn cache_write(
    config: &ExtractionConfig,
    key: &str,
    instances: &[LTInstance],
) -> Result<(), std::io::Error> {
    let Some(dir) = config.cache_dir.as_ref() else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{key}.json"));
    let tmp = dir.join(format!("{key}.json.tmp.{}", std::process::id()));
    std::fs::write(&tmp, serde_json::to_string(instances).expect("serializable"))?;
    std::fs::rename(&tmp, &path)
}

/// Run both stages for one findings text. Results are cached by (prompt
/// version, model name, findings content); a cache hit performs no backend
/// calls. Per-type stage-2 failures after retries surface as
/// [`ExtractError::Partial`] carrying the completed types.
pub fn extract_structured_report(
    report_id: &str,
    findings: &str,
    backend: &dyn ExtractionBackend,
    config: &ExtractionConfig,
) -> Result<StructuredLTReport, ExtractError> {
    let key = cache_key(findings, config);
    if let Some(instances) = cache_read(config, &key) {
        return Ok(StructuredLTReport::new(report_id, instances));
    }
    let mentions = extract_type_mentions(findings, backend)?;
    let mut completed: Vec<(String, Vec<LTInstance>)> = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    for mention in &mentions {
        match extract_instances_for_type(findings, &mention.lt_type_name, backend) {
            Ok(instances) => completed.push((mention.lt_type_name.clone(), instances)),
            Err(err) => failures.push((mention.lt_type_name.clone(), err.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(ExtractError::Partial(PartialExtraction {
            completed,
            failures,
        }));
    }
    let instances: Vec<LTInstance> = completed.into_iter().flat_map(|(_, v)| v).collect();
    cache_write(config, &key, &instances)?;
    Ok(StructuredLTReport::new(report_id, instances))
}

/// Extract a whole corpus with a bounded number of in-flight reports.
/// Output order follows input order.
pub fn extract_corpus(
    records: &[crate::jsonl::FindingsRecord],
    backend: &dyn ExtractionBackend,
    config: &ExtractionConfig,
    concurrency: usize,
) -> Result<Vec<StructuredLTReport>, ExtractError> {
    let concurrency = concurrency.max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<StructuredLTReport, ExtractError>>>> =
        records.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..concurrency.min(records.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= records.len() {
                    break;
                }
                let record = &records[idx];
                let result =
                    extract_structured_report(&record.report_id, &record.findings, backend, config);
                *results[idx].lock().unwrap() = Some(result);
            });
        }
    });
    results
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{CvcSubtype, LTType, PlacementLabel, SideLabel};

    #[test]
    fn parse_or_repair_handles_wrappers() {
        assert_eq!(parse_or_repair_json("[]").unwrap(), serde_json::json!([]));
        assert_eq!(
            parse_or_repair_json("```json\n[]\n```").unwrap(),
            serde_json::json!([])
        );
        let wrapped = "here is the list: [ {\"a\": 1} ] hope it helps";
        assert_eq!(
            parse_or_repair_json(wrapped).unwrap(),
            serde_json::json!([{"a": 1}])
        );
        assert!(parse_or_repair_json("no json here").is_err());
        // Brackets inside strings do not confuse the scan.
        let tricky = "x [\"a]\", 2] y";
        assert_eq!(
            parse_or_repair_json(tricky).unwrap(),
            serde_json::json!(["a]", 2])
        );
    }

    #[test]
    fn type_mentions_on_clean_text_is_empty() {
        let backend = RuleBasedBackend::new();
        let mentions = extract_type_mentions("The lungs are clear.", &backend).unwrap();
        assert!(mentions.is_empty());
    }

    #[test]
    fn instances_for_type_empty_when_absent() {
        let backend = RuleBasedBackend::new();
        let out = extract_instances_for_type(
            "The lungs are clear.",
            "Central Venous Catheter",
            &backend,
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn ij_cvc_template_extracts_one_instance() {
        let backend = RuleBasedBackend::new();
        let out = extract_instances_for_type(
            "Right IJ CVC with tip in the upper SVC.",
            "Central Venous Catheter",
            &backend,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        let inst = &out[0];
        assert_eq!(inst.lt_type(), LTType::Cvc);
        assert_eq!(inst.cvc_subtype(), Some(CvcSubtype::IjCvc));
        assert_eq!(inst.side(), SideLabel::Right);
        assert_eq!(inst.tip().as_str(), "superior vena cava");
        assert_eq!(inst.placement(), PlacementLabel::Correct);
    }

    #[test]
    fn empty_findings_report() {
        let backend = RuleBasedBackend::new();
        let config = ExtractionConfig::default();
        let report = extract_structured_report(
            "r1",
            "The lungs are clear. Normal cardiomediastinal silhouette.",
            &backend,
            &config,
        )
        .unwrap();
        assert!(report.is_empty());
    }

    #[test]
    fn cache_hit_performs_no_backend_calls() {
        let dir = tempfile::tempdir().unwrap();
        let backend = RuleBasedBackend::new();
        let config = ExtractionConfig {
            cache_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let findings = "New left chest tube with tip in the lower hemithorax.";
        let first = extract_structured_report("r1", findings, &backend, &config).unwrap();
        let calls_after_first = backend.calls();
        assert!(calls_after_first > 0);
        let second = extract_structured_report("r1", findings, &backend, &config).unwrap();
        assert_eq!(backend.calls(), calls_after_first);
        assert_eq!(
            serde_json::to_string(&first).unwrap(),
            serde_json::to_string(&second).unwrap()
        );
    }

    #[test]
    fn corpus_extraction_preserves_order() {
        let backend = RuleBasedBackend::new();
        let config = ExtractionConfig::default();
        let records: Vec<crate::jsonl::FindingsRecord> = (0..20)
            .map(|i| crate::jsonl::FindingsRecord {
                report_id: format!("r{i}"),
                findings: if i % 2 == 0 {
                    "New left chest tube with tip in the lower hemithorax.".to_string()
                } else {
                    "The lungs are clear.".to_string()
                },
            })
            .collect();
        let reports = extract_corpus(&records, &backend, &config, 4).unwrap();
        assert_eq!(reports.len(), 20);
        for (i, report) in reports.iter().enumerate() {
            assert_eq!(report.report_id(), format!("r{i}"));
            assert_eq!(report.len(), usize::from(i % 2 == 0));
        }
    }
}
