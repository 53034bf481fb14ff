//! Deterministic rule-based backend.
//!
//! Dispatches on the exact prompt asset it is handed and answers from a
//! fixed grammar: a trigger-word sectionizer for the cleaning prompts, a
//! sentence-difference rule for the merge prompt, and the shared extraction
//! grammar for the stage-1/stage-2 prompts. Free of I/O and fully
//! deterministic, which makes it both the offline extraction path and the
//! mock the test oracles are built against.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use regex::Regex;
use serde_json::json;

use crate::extraction::grammar::{
    self, cvc_subtype_of, find_type_mention, parse_change, parse_explicit_placement, parse_side,
    parse_tip, split_sentences, SideReading,
};
use crate::extraction::{BackendError, ExtractionBackend};
use crate::prompts;
use crate::reportprep::Era;
use crate::schema::{
    placement_for_tip, type_categorical, ChangeLabel, LTType, PlacementLabel, SideLabel, TipLabel,
};

/// Grammar-driven extraction backend.
#[derive(Debug, Default)]
pub struct RuleBasedBackend {
    calls: AtomicU64,
}

impl RuleBasedBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ExtractionBackend for RuleBasedBackend {
    fn complete(&self, system_prompt: &str, user_content: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if system_prompt == prompts::CLEAN_PRE_EPIC {
            return Ok(sectionize(user_content, Era::PreEpic).to_string());
        }
        if system_prompt == prompts::CLEAN_POST_EPIC {
            return Ok(sectionize(user_content, Era::PostEpic).to_string());
        }
        if system_prompt == prompts::MERGE_SECTIONS {
            return Ok(merge_addition(user_content));
        }
        if system_prompt == prompts::STAGE1_TYPES {
            return Ok(stage1(user_content));
        }
        if system_prompt == prompts::CLASSIFY_ERROR {
            return Ok(classify_error(user_content));
        }
        for name in prompts::STAGE1_TYPE_NAMES {
            if prompts::stage2_prompt(name) == Some(system_prompt) {
                return Ok(stage2(name, user_content));
            }
        }
        Err(BackendError::UnknownPrompt)
    }

    fn name(&self) -> &str {
        "rule"
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Stage 1: one entry per mentioned type, reference text concatenated.
fn stage1(findings: &str) -> String {
    let sentences = split_sentences(findings);
    let mut entries = Vec::new();
    for name in prompts::STAGE1_TYPE_NAMES {
        let mentions: Vec<&str> = sentences
            .iter()
            .copied()
            .filter(|s| find_type_mention(s, name).is_some())
            .collect();
        if !mentions.is_empty() {
            entries.push(json!({
                "type": name,
                "reference_text": mentions.join(" "),
            }));
        }
    }
    serde_json::Value::Array(entries).to_string()
}

/// Stage 2: parse every sentence mentioning the requested type.
fn stage2(stage1_name: &str, user_content: &str) -> String {
    let findings = user_content
        .strip_prefix("Current Study:")
        .map(str::trim_start)
        .unwrap_or(user_content);
    let mut entries = Vec::new();
    for sentence in split_sentences(findings) {
        let Some((mention_pos, mention_len)) = find_type_mention(sentence, stage1_name) else {
            continue;
        };
        let (lt_type, subtype) = if stage1_name == "Central Venous Catheter" {
            cvc_subtype_of(sentence)
                .unwrap_or((LTType::Cvc, Some(crate::schema::CvcSubtype::UnspecifiedCvc)))
        } else {
            let lt_type = LTType::ALL
                .into_iter()
                .find(|t| t.stage1_name() == stage1_name)
                .expect("known stage-1 name");
            (lt_type, None)
        };
        let change = parse_change(sentence);
        let (tip, tip_text) = if change == ChangeLabel::Removed {
            (TipLabel::not_specified(lt_type), None)
        } else {
            match parse_tip(sentence, lt_type) {
                Some((canonical, matched)) => match TipLabel::new(lt_type, &canonical) {
                    Ok(tip) => (tip, Some(matched.to_string())),
                    Err(_) => (TipLabel::unclear(lt_type), Some(matched.to_string())),
                },
                None => (TipLabel::not_specified(lt_type), None),
            }
        };
        let mapped = placement_for_tip(lt_type, &tip);
        let (placement, overridden) = if change == ChangeLabel::Removed {
            (PlacementLabel::NotSpecified, false)
        } else {
            match parse_explicit_placement(sentence) {
                Some(explicit) => {
                    let conflicts = tip.is_location()
                        && matches!(
                            explicit,
                            PlacementLabel::Correct | PlacementLabel::Incorrect
                        )
                        && explicit != mapped;
                    (explicit, conflicts)
                }
                None => (mapped, false),
            }
        };
        let sides = match parse_side(&sentence[..mention_pos]) {
            SideReading::Bilateral => vec![SideLabel::Left, SideLabel::Right],
            SideReading::One(side) => vec![side],
        };
        let type_text = &sentence[mention_pos..mention_pos + mention_len];
        for side in sides {
            let mut entry = json!({
                "reference_sentence": sentence,
                "type": type_text,
                "tip": tip_text.clone().unwrap_or_else(|| "N/A".to_string()),
                "change": if change == ChangeLabel::NotSpecified { "N/A".to_string() } else { change.as_str().to_string() },
                "side_categorical": side.as_str(),
                "type_categorical": type_categorical(lt_type, subtype),
                "tip_categorical": tip.as_str(),
                "change_categorical": change.as_str(),
                "placement": placement.as_str(),
            });
            if overridden {
                entry["placement_override"] = json!(true);
            }
            entries.push(entry);
        }
    }
    serde_json::Value::Array(entries).to_string()
}

struct Trigger {
    words: &'static [&'static str],
    section: &'static str,
}

const TRIGGERS: [Trigger; 5] = [
    Trigger {
        words: &["IMPRESSIONS", "IMPRESSION"],
        section: "impression",
    },
    Trigger {
        words: &[
            "EXAM DESCRIPTION",
            "EXAM TYPE",
            "EXAMINATION",
            "PROCEDURE",
            "TECHNIQUE",
            "STUDY",
            "EXAM",
        ],
        section: "exam_type",
    },
    Trigger {
        words: &["REASON FOR EXAM", "HISTORY", "INDICATION"],
        section: "indication",
    },
    Trigger {
        words: &["COMPARISONS", "COMPARISON"],
        section: "comparison",
    },
    Trigger {
        words: &["FINDINGS"],
        section: "findings",
    },
];

fn date_patterns() -> &'static [Regex] {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            r"\b\d{4}-\d{1,2}-\d{1,2}\b",
            r"\b\d{1,2}/\d{1,2}/\d{2,4}\b",
            r"\b(?:Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec|January|February|March|April|June|July|August|September|October|November|December)\.? \d{1,2},? \d{4}\b",
            r"\b(?:January|February|March|April|May|June|July|August|September|October|November|December) \d{4}\b",
            r"\b\d{3,4} ?hrs\b",
            r"\b\d{1,2}:\d{2}(?::\d{2})?(?: ?[AaPp][Mm])?\b",
            r"\b(?:19|20)\d{2}\b",
        ]
        .iter()
        .map(|p| Regex::new(p).unwrap())
        .collect()
    })
}

fn mask_dates(text: &str) -> String {
    let mut out = text.to_string();
    for pattern in date_patterns() {
        out = pattern.replace_all(&out, "_").into_owned();
    }
    out
}

fn find_dates(text: &str) -> Vec<String> {
    let mut found: Vec<(usize, String)> = Vec::new();
    let mut taken: Vec<(usize, usize)> = Vec::new();
    for pattern in date_patterns() {
        for m in pattern.find_iter(text) {
            if taken.iter().all(|&(s, e)| m.end() <= s || m.start() >= e) {
                taken.push((m.start(), m.end()));
                found.push((m.start(), m.as_str().to_string()));
            }
        }
    }
    found.sort_by_key(|(pos, _)| *pos);
    found.into_iter().map(|(_, d)| d).collect()
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-sensitive word-boundary search for an uppercase trigger.
fn find_trigger(text: &str, word: &str, from: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut start = from;
    while let Some(pos) = text[start..].find(word) {
        let at = start + pos;
        let end = at + word.len();
        let before_ok = at == 0 || !bytes[at - 1].is_ascii_alphanumeric();
        let after_ok = end >= bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if before_ok && after_ok {
            return Some(at);
        }
        start = at + 1;
    }
    None
}

/// Trigger-word sectionizer behind the cleaning prompts.
fn sectionize(raw: &str, era: Era) -> serde_json::Value {
    struct Hit {
        pos: usize,
        len: usize,
        section: &'static str,
    }
    let mut hits: Vec<Hit> = Vec::new();
    for trigger in &TRIGGERS {
        for word in trigger.words {
            let mut from = 0;
            while let Some(pos) = find_trigger(raw, word, from) {
                hits.push(Hit {
                    pos,
                    len: word.len(),
                    section: trigger.section,
                });
                from = pos + word.len();
            }
        }
    }
    // Longest trigger wins at a position; drop hits inside an accepted span.
    hits.sort_by_key(|h| (h.pos, std::cmp::Reverse(h.len)));
    let mut accepted: Vec<Hit> = Vec::new();
    for hit in hits {
        if accepted
            .iter()
            .all(|a| hit.pos >= a.pos + a.len || hit.pos + hit.len <= a.pos)
        {
            accepted.push(hit);
        }
    }
    accepted.sort_by_key(|h| h.pos);

    let mut sections: std::collections::BTreeMap<&str, String> = Default::default();
    let mut add = |section: &'static str, text: &str| {
        let text = text.trim().trim_start_matches(':').trim();
        if text.is_empty() {
            return;
        }
        let slot = sections.entry(section).or_default();
        if !slot.is_empty() {
            slot.push(' ');
        }
        slot.push_str(text);
    };

    let head_end = accepted.first().map_or(raw.len(), |h| h.pos);
    // Untagged summary text reads as the impression.
    add("impression", &raw[..head_end]);
    for (i, hit) in accepted.iter().enumerate() {
        let seg_start = hit.pos + hit.len;
        let seg_end = accepted.get(i + 1).map_or(raw.len(), |h| h.pos);
        add(hit.section, &raw[seg_start..seg_end]);
    }

    let comparison_raw = sections.get("comparison").cloned().unwrap_or_default();
    let dates = find_dates(&comparison_raw);
    let lower = raw.to_lowercase();
    let critical = lower.contains("critical finding")
        || (era == Era::PreEpic && lower.contains("critical result"));

    let clean = |section: &str| -> String {
        sections
            .get(section)
            .map(|text| collapse_whitespace(&mask_dates(text)))
            .unwrap_or_default()
    };
    let mut out = json!({
        "impression": clean("impression"),
        "exam_type": clean("exam_type"),
        "indication": clean("indication"),
        "comparison": clean("comparison"),
        "findings": clean("findings"),
        "previous_study_dates": dates,
        "critical_finding": critical,
    });
    if era == Era::PreEpic {
        out["historically_loaded"] = json!(lower.contains("historically loaded"));
    }
    out
}

fn normalize_sentence(sentence: &str) -> String {
    let stripped = Regex::new(r"^\s*\d+\.\s*")
        .unwrap()
        .replace(sentence, "")
        .into_owned();
    stripped
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn strip_numbering(sentence: &str) -> String {
    Regex::new(r"^\s*\d+\.\s*")
        .unwrap()
        .replace(sentence, "")
        .into_owned()
}

/// The merge prompt over labeled blocks: sentences of the Findings block not
/// already stated in the Impression block, formatted for appending.
fn merge_addition(user_content: &str) -> String {
    let (findings_block, impression_block) = split_merge_blocks(user_content);
    let existing: std::collections::HashSet<String> = split_sentences(&impression_block)
        .iter()
        .map(|s| normalize_sentence(s))
        .collect();
    let novel: Vec<String> = split_sentences(&findings_block)
        .iter()
        .filter(|s| !existing.contains(&normalize_sentence(s)))
        .map(|s| strip_numbering(s))
        .collect();
    if novel.is_empty() {
        return String::new();
    }
    let numbering = Regex::new(r"(?:^|\s)(\d+)\.\s").unwrap();
    let max_number: Option<u64> = numbering
        .captures_iter(&impression_block)
        .filter_map(|c| c[1].parse::<u64>().ok())
        .max();
    match max_number {
        Some(n) => novel
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", n + 1 + i as u64))
            .collect::<Vec<_>>()
            .join(" "),
        None => novel.join(" "),
    }
}

fn split_merge_blocks(user_content: &str) -> (String, String) {
    let mut findings = String::new();
    let mut impression = String::new();
    let mut current: Option<&mut String> = None;
    for line in user_content.lines() {
        if let Some(rest) = line.strip_prefix("Findings:") {
            findings.push_str(rest.trim());
            current = Some(&mut findings);
            continue;
        }
        if let Some(rest) = line.strip_prefix("Impression:") {
            impression.push_str(rest.trim());
            current = Some(&mut impression);
            continue;
        }
        if let Some(block) = current.as_deref_mut() {
            if !block.is_empty() {
                block.push(' ');
            }
            block.push_str(line.trim());
        }
    }
    (findings, impression)
}

const PATHOLOGY_WORDS: [&str; 17] = [
    "effusion",
    "atelectasis",
    "cardiomegaly",
    "pneumothorax",
    "consolidation",
    "edema",
    "opacity",
    "opacification",
    "pneumonia",
    "fracture",
    "congestion",
    "hernia",
    "nodule",
    "mass",
    "granuloma",
    "emphysema",
    "thickening",
];

fn classify_error(description: &str) -> String {
    let is_lt = prompts::STAGE1_TYPE_NAMES
        .iter()
        .any(|name| find_type_mention(description, name).is_some())
        || ["tip", "catheter", "cannula"]
            .iter()
            .any(|w| grammar::contains_word(description, w));
    let category = if is_lt {
        "lines_tubes"
    } else if PATHOLOGY_WORDS
        .iter()
        .any(|w| grammar::contains_word(description, w))
    {
        "pathological"
    } else {
        "other"
    };
    json!({ "category": category }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend() -> RuleBasedBackend {
        RuleBasedBackend::new()
    }

    #[test]
    fn unknown_prompt_is_rejected() {
        let err = backend().complete("tell me a joke", "x").unwrap_err();
        assert!(matches!(err, BackendError::UnknownPrompt));
    }

    #[test]
    fn counts_calls() {
        let b = backend();
        assert_eq!(b.calls(), 0);
        b.complete(prompts::STAGE1_TYPES, "The lungs are clear.")
            .unwrap();
        assert_eq!(b.calls(), 1);
    }

    #[test]
    fn stage1_empty_for_device_free_text() {
        let out = backend()
            .complete(prompts::STAGE1_TYPES, "The lungs are clear.")
            .unwrap();
        assert_eq!(out, "[]");
    }

    #[test]
    fn stage1_detects_types_in_quoted_report() {
        let text = "Since earlier today, new left IJ CVC with tip in the upper SVC. \
                    No pneumothorax. No other change. ETT with tip in good position. \
                    Right IJ SGC with tip in the MPA. Sternotomy with mediastinal clips, \
                    drains and AVR. Left atrial appendage closure clip. AV pacemaker. \
                    Left chest tube. Small right pleural effusion with associated \
                    atelectasis in the right base.";
        let out = backend().complete(prompts::STAGE1_TYPES, text).unwrap();
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
        let names: Vec<&str> = parsed.iter().map(|e| e["type"].as_str().unwrap()).collect();
        assert_eq!(
            names,
            vec![
                "Central Venous Catheter",
                "Endotracheal Tube",
                "Swan-Ganz Catheter",
                "Chest Tube",
                "Mediastinal Drain"
            ]
        );
        // Reference text carries the mentioning sentence.
        assert!(parsed[0]["reference_text"]
            .as_str()
            .unwrap()
            .contains("new left IJ CVC"));
    }

    #[test]
    fn stage2_parses_ij_cvc_template() {
        let out = backend()
            .complete(
                prompts::stage2_prompt("Central Venous Catheter").unwrap(),
                "Current Study:\nRight IJ CVC with tip in the upper SVC.",
            )
            .unwrap();
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
        assert_eq!(parsed.len(), 1);
        let inst = &parsed[0];
        assert_eq!(inst["type_categorical"], "IJ CVC");
        assert_eq!(inst["side_categorical"], "right");
        assert_eq!(inst["tip_categorical"], "superior vena cava");
        assert_eq!(inst["change_categorical"], "N/A");
        assert_eq!(inst["placement"], "correct");
    }

    #[test]
    fn stage2_expands_bilateral() {
        let out = backend()
            .complete(
                prompts::stage2_prompt("Chest Tube").unwrap(),
                "Bilateral chest tubes.",
            )
            .unwrap();
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0]["side_categorical"], "left");
        assert_eq!(parsed[1]["side_categorical"], "right");
        assert_eq!(parsed[0]["type_categorical"], "Chest Tube");
    }

    #[test]
    fn stage2_removed_forces_na_tip_and_placement() {
        let out = backend()
            .complete(
                prompts::stage2_prompt("Central Venous Catheter").unwrap(),
                "The right IJ CVC has been removed.",
            )
            .unwrap();
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
        assert_eq!(parsed[0]["change_categorical"], "removed");
        assert_eq!(parsed[0]["tip_categorical"], "N/A");
        assert_eq!(parsed[0]["placement"], "N/A");
    }

    #[test]
    fn stage2_axillary_example() {
        let out = backend()
            .complete(
                prompts::stage2_prompt("Central Venous Catheter").unwrap(),
                "Since earlier today, new right IJ CVC with tip directed laterally \
                 in the right axillary vein. Recommend repositioning.",
            )
            .unwrap();
        let parsed: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
        assert_eq!(parsed.len(), 1);
        let inst = &parsed[0];
        assert_eq!(inst["type_categorical"], "IJ CVC");
        assert_eq!(inst["side_categorical"], "right");
        assert_eq!(inst["change_categorical"], "new");
        assert_eq!(inst["tip_categorical"], "axillary vein");
        assert_eq!(inst["placement"], "incorrect");
    }

    #[test]
    fn sectionizer_masks_dates_and_extracts_sections() {
        let raw = "IMPRESSION: clear lungs. 2011-02-21 FINDINGS: No effusion. \
                   COMPARISON: Prior from July 2007.";
        let out = backend().complete(prompts::CLEAN_POST_EPIC, raw).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(parsed["impression"], "clear lungs. _");
        assert_eq!(parsed["findings"], "No effusion.");
        assert_eq!(parsed["comparison"], "Prior from _.");
        assert_eq!(parsed["previous_study_dates"][0], "July 2007");
        assert_eq!(parsed["critical_finding"], false);
    }

    #[test]
    fn sectionizer_puts_untagged_text_in_impression() {
        let out = backend()
            .complete(prompts::CLEAN_PRE_EPIC, "Stable appearance of the chest.")
            .unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(parsed["impression"], "Stable appearance of the chest.");
        assert_eq!(parsed["findings"], "");
        assert_eq!(parsed["historically_loaded"], false);
    }

    #[test]
    fn merge_returns_empty_when_nothing_novel() {
        let out = backend()
            .complete(
                prompts::MERGE_SECTIONS,
                "Findings:\nNo effusion.\n\nImpression:\nNo effusion.",
            )
            .unwrap();
        assert_eq!(out, "");
    }

    #[test]
    fn merge_continues_numbering() {
        let out = backend()
            .complete(
                prompts::MERGE_SECTIONS,
                "Findings:\n1. No effusion. 2. Clear lungs. 3. Hiatal hernia.\n\n\
                 Impression:\n1. No effusion. 2. Clear lungs.",
            )
            .unwrap();
        assert_eq!(out, "3. Hiatal hernia.");
    }

    #[test]
    fn classifies_error_categories() {
        let lt = backend()
            .complete(prompts::CLASSIFY_ERROR, "ETT tip 2cm above the carina.")
            .unwrap();
        assert!(lt.contains("lines_tubes"));
        let path = backend()
            .complete(prompts::CLASSIFY_ERROR, "Large left pleural effusion.")
            .unwrap();
        assert!(path.contains("pathological"));
        let other = backend()
            .complete(prompts::CLASSIFY_ERROR, "Awkward wording.")
            .unwrap();
        assert!(other.contains("other"));
    }
}
