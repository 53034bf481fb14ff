//! Shared sentence grammar for the deterministic extraction path.
//!
//! The synthetic generator renders one sentence per instance from these
//! tables and the rule-based backend parses with the same tables, so
//! rendered text always parses back to the generating labels. Parsing is
//! containment-based with word boundaries and also tolerates common report
//! phrasings (abbreviations, plurals).

use crate::schema::{ChangeLabel, CvcSubtype, LTType, PlacementLabel, SideLabel};

/// Case-insensitive word-boundary search. Returns the byte offset of the
/// first match of `needle` in `haystack` where both ends fall on non-word
/// characters.
pub fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let hay = haystack.to_lowercase();
    let needle = needle.to_lowercase();
    let bytes = hay.as_bytes();
    let mut start = 0;
    while let Some(pos) = hay[start..].find(&needle) {
        let at = start + pos;
        let end = at + needle.len();
        let before_ok = at == 0 || !is_word_byte(bytes[at - 1]);
        let after_ok = end >= bytes.len() || !is_word_byte(bytes[end]);
        if before_ok && after_ok {
            return Some(at);
        }
        start = at + 1;
    }
    None
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric()
}

pub fn contains_word(haystack: &str, needle: &str) -> bool {
    find_word(haystack, needle).is_some()
}

/// Split text into sentences on `.`, `!` or `?` followed by whitespace or
/// end of text. The terminator stays with its sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?')
            && (i + 1 == bytes.len() || bytes[i + 1].is_ascii_whitespace())
        {
            let sentence = text[start..=i].trim();
            if !sentence.is_empty() {
                sentences.push(sentence);
            }
            start = i + 1;
        }
        i += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

/// Synonyms that establish a type mention, searched with word boundaries.
/// Ordering matters only for locating the earliest mention in a sentence.
pub fn type_synonyms(stage1_name: &str) -> &'static [&'static str] {
    match stage1_name {
        "Central Venous Catheter" => &[
            "central venous catheter",
            "central venous catheters",
            "central line",
            "central lines",
            "central catheter",
            "central catheters",
            "cvc",
            "cvcs",
            "picc line",
            "picc lines",
            "picc",
            "piccs",
            "port-a-cath",
            "port-a-caths",
            "portacath",
            "mediport",
            "ij cvc",
            "ij line",
            "ij lines",
            "internal jugular line",
            "internal jugular catheter",
            "subclavian cvc",
            "subclavian line",
            "subclavian catheter",
            "femoral cvc",
            "femoral line",
            "femoral catheter",
            "ivc line",
        ],
        "Endotracheal Tube" => &[
            "endotracheal tube",
            "endotracheal tubes",
            "et tube",
            "et tubes",
            "ett",
            "extubated",
            "extubation",
            "extubate",
        ],
        "Tracheostomy Tube" => &["tracheostomy"],
        "Nasogastric Tube" => &[
            "nasogastric tube",
            "nasogastric tubes",
            "nasogastric",
            "ng tube",
            "ng tubes",
            "ngt",
            "enteric tube",
            "enteric tubes",
            "feeding tube",
            "feeding tubes",
            "nasoenteric",
            "dobbhoff",
            "corpak",
            "subdiaphragmatic tube",
        ],
        "Swan-Ganz Catheter" => &[
            "swan-ganz",
            "swan ganz",
            "sgc",
            "pulmonary artery catheter",
            "pa catheter",
        ],
        "Chest Tube" => &[
            "chest tube",
            "chest tubes",
            "pleural drain",
            "pleural drains",
            "chest drain",
            "chest drains",
            "pleural catheter",
            "pleural catheters",
            "pigtail",
            "thoracostomy tube",
            "thoracostomy tubes",
            "drainage tube",
            "drainage tubes",
            "drainage catheter",
            "drainage catheters",
        ],
        "Mediastinal Drain" => &["mediastinal drain", "mediastinal drains", "pericardial drain"],
        "Intra-Aortic Balloon Pump" => &[
            "iabp",
            "intra-aortic balloon pump",
            "intraaortic balloon pump",
            "balloon pump",
        ],
        _ => &[],
    }
}

/// Position of the earliest type-synonym match in a sentence, with the
/// matched length. Mediastinal drains additionally match the split phrasing
/// "mediastinal ... drains" within one sentence.
pub fn find_type_mention(sentence: &str, stage1_name: &str) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for syn in type_synonyms(stage1_name) {
        if let Some(pos) = find_word(sentence, syn) {
            if best.map_or(true, |(b, _)| pos < b) {
                best = Some((pos, syn.len()));
            }
        }
    }
    if best.is_none() && stage1_name == "Mediastinal Drain" {
        if let Some(pos) = find_word(sentence, "mediastinal") {
            for drain in ["drains", "drain", "drainage"] {
                if let Some(dpos) = find_word(sentence, drain) {
                    if dpos > pos {
                        return Some((pos, "mediastinal".len()));
                    }
                }
            }
        }
    }
    best
}

/// CVC subtype indicators, checked in order; the first hit wins.
const CVC_SUBTYPES: [(&str, &[&str]); 5] = [
    ("PICC", &["picc"]),
    (
        "IJ CVC",
        &[
            "ij cvc",
            "ij line",
            "ij lines",
            "internal jugular line",
            "internal jugular catheter",
            "internal jugular cvc",
            "ij central",
        ],
    ),
    (
        "Subclavian CVC/Port-a-Cath",
        &[
            "subclavian cvc",
            "subclavian line",
            "subclavian catheter",
            "subclavian central",
            "port-a-cath",
            "portacath",
            "mediport",
        ],
    ),
    (
        "Femoral CVC",
        &[
            "femoral cvc",
            "femoral line",
            "femoral catheter",
            "femoral central",
            "ivc line",
        ],
    ),
    (
        "Unspecified CVC",
        &[
            "central venous catheter",
            "central venous catheters",
            "central line",
            "central lines",
            "central catheter",
            "central catheters",
            "cvc",
            "cvcs",
        ],
    ),
];

/// Resolve the CVC-pass type of a sentence: PICC or a CVC subtype.
pub fn cvc_subtype_of(sentence: &str) -> Option<(LTType, Option<CvcSubtype>)> {
    for (name, indicators) in CVC_SUBTYPES {
        if indicators.iter().any(|s| contains_word(sentence, s)) {
            return Some(match name {
                "PICC" => (LTType::Picc, None),
                "IJ CVC" => (LTType::Cvc, Some(CvcSubtype::IjCvc)),
                "Subclavian CVC/Port-a-Cath" => {
                    (LTType::Cvc, Some(CvcSubtype::SubclavianOrPortACath))
                }
                "Femoral CVC" => (LTType::Cvc, Some(CvcSubtype::FemoralCvc)),
                _ => (LTType::Cvc, Some(CvcSubtype::UnspecifiedCvc)),
            });
        }
    }
    None
}

/// The phrase the generator renders for a type, also a parseable synonym.
pub fn render_type_phrase(lt_type: LTType, subtype: Option<CvcSubtype>) -> &'static str {
    match (lt_type, subtype) {
        (LTType::Cvc, Some(CvcSubtype::IjCvc)) => "IJ CVC",
        (LTType::Cvc, Some(CvcSubtype::SubclavianOrPortACath)) => "subclavian CVC",
        (LTType::Cvc, Some(CvcSubtype::FemoralCvc)) => "femoral CVC",
        (LTType::Cvc, _) => "central venous catheter",
        (LTType::Picc, _) => "PICC line",
        (LTType::ChestTube, _) => "chest tube",
        (LTType::Ett, _) => "endotracheal tube",
        (LTType::Iabp, _) => "intra-aortic balloon pump",
        (LTType::Ngt, _) => "nasogastric tube",
        (LTType::Sgc, _) => "Swan-Ganz catheter",
        (LTType::TracheostomyTube, _) => "tracheostomy tube",
        (LTType::MediastinalDrain, _) => "mediastinal drain",
    }
}

/// Leading change token per label; `N/A` renders as a neutral "Noted".
pub fn render_change_token(change: ChangeLabel) -> &'static str {
    match change {
        ChangeLabel::New => "New",
        ChangeLabel::Moved => "Repositioned",
        ChangeLabel::Removed => "Removed",
        ChangeLabel::Unchanged => "Unchanged",
        ChangeLabel::Unclear => "Equivocal change of",
        ChangeLabel::NotSpecified => "Noted",
    }
}

/// Detect the change label of a sentence. Precedence: removed, new, moved,
/// unchanged, unclear. "repositioned" preceded by "be/been/being" is a
/// recommendation, not an observed move.
pub fn parse_change(sentence: &str) -> ChangeLabel {
    let lower = sentence.to_lowercase();
    if ["removed", "extubated", "extubation"]
        .iter()
        .any(|w| contains_word(&lower, w))
    {
        return ChangeLabel::Removed;
    }
    if ["new", "newly"].iter().any(|w| contains_word(&lower, w)) {
        return ChangeLabel::New;
    }
    if contains_word(&lower, "moved")
        || lower.contains("changed position")
        || lower.contains("has migrated")
        || find_word(&lower, "repositioned").is_some_and(|pos| {
            let prefix = &lower[..pos];
            !["be ", "been ", "being "].iter().any(|p| prefix.ends_with(p))
        })
    {
        return ChangeLabel::Moved;
    }
    if contains_word(&lower, "unchanged") || contains_word(&lower, "stable") {
        return ChangeLabel::Unchanged;
    }
    if contains_word(&lower, "equivocal") {
        return ChangeLabel::Unclear;
    }
    ChangeLabel::NotSpecified
}

/// Explicit placement statements override the tip mapping.
pub fn parse_explicit_placement(sentence: &str) -> Option<PlacementLabel> {
    let lower = sentence.to_lowercase();
    const INCORRECT: [&str; 9] = [
        "malposition",
        "misplaced",
        "should be repositioned",
        "recommend repositioning",
        "requires repositioning",
        "incorrectly placed",
        "kinked",
        "coiled",
        "doubled up",
    ];
    if INCORRECT.iter().any(|m| lower.contains(m)) {
        return Some(PlacementLabel::Incorrect);
    }
    if lower.contains("placement uncertain") {
        return Some(PlacementLabel::Unclear);
    }
    // "correctly placed within the proximal descending aorta" is an IABP tip
    // value, not an explicit statement; it is handled by the tip matcher.
    let correct_hit = lower.contains("in place")
        || lower.contains("stable position")
        || lower.contains("well positioned")
        || (lower.contains("correctly placed") && !lower.contains("correctly placed within"));
    if correct_hit {
        return Some(PlacementLabel::Correct);
    }
    None
}

/// Marker the generator appends to express an explicit placement.
pub fn render_placement_marker(placement: PlacementLabel) -> Option<&'static str> {
    match placement {
        PlacementLabel::Correct => Some("in place"),
        PlacementLabel::Incorrect => Some("malpositioned"),
        PlacementLabel::Unclear => Some("placement uncertain"),
        PlacementLabel::NotSpecified => None,
    }
}

/// Side words are only trusted before the type mention (the insertion side
/// precedes the device name; tip-side words come later in the sentence).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideReading {
    One(SideLabel),
    Bilateral,
}

pub fn parse_side(window: &str) -> SideReading {
    let lower = window.to_lowercase();
    let left = contains_word(&lower, "left");
    let right = contains_word(&lower, "right");
    if contains_word(&lower, "bilateral") || (left && right) {
        return SideReading::Bilateral;
    }
    if left {
        return SideReading::One(SideLabel::Left);
    }
    if right {
        return SideReading::One(SideLabel::Right);
    }
    if contains_word(&lower, "indeterminate") {
        return SideReading::One(SideLabel::Unclear);
    }
    SideReading::One(SideLabel::NotSpecified)
}

pub fn render_side_phrase(side: SideLabel) -> &'static str {
    match side {
        SideLabel::Left => "left ",
        SideLabel::Right => "right ",
        SideLabel::Unclear => "indeterminate-side ",
        SideLabel::NotSpecified => "",
    }
}

/// Extra tip aliases accepted on top of the vocabulary values themselves.
pub fn tip_aliases(lt_type: LTType) -> &'static [(&'static str, &'static str)] {
    match lt_type {
        LTType::Cvc | LTType::Picc => &[
            ("svc", "superior vena cava"),
            ("cavoatrial junction", "superior cavoatrial junction"),
            ("cavo-atrial junction", "superior cavoatrial junction"),
            ("innominate vein", "brachiocephalic vein"),
            ("ivc", "inferior vena cava"),
        ],
        LTType::Sgc => &[
            ("mpa", "main pulmonary artery"),
            ("rpa", "right pulmonary artery"),
            ("lpa", "left pulmonary artery"),
            ("rvot", "right ventricular outflow tract"),
        ],
        LTType::Ett => &[
            ("good position", "between 2 and 7cm above the carina"),
            ("standard position", "between 2 and 7cm above the carina"),
            ("satisfactory position", "between 2 and 7cm above the carina"),
        ],
        _ => &[],
    }
}

/// Resolve a sentence's tip location against a type's vocabulary. Longest
/// alias wins so more specific values shadow their substrings. Returns the
/// canonical vocabulary value and the matched text.
pub fn parse_tip<'a>(sentence: &'a str, lt_type: LTType) -> Option<(String, &'a str)> {
    let mut candidates: Vec<(&str, String)> = crate::schema::placement_map()
        .tips_for(lt_type)
        .iter()
        .map(|v| (v.as_str(), v.clone()))
        .collect();
    for (alias, canonical) in tip_aliases(lt_type) {
        candidates.push((alias, canonical.to_string()));
    }
    candidates.sort_by_key(|(alias, _)| std::cmp::Reverse(alias.len()));
    for (alias, canonical) in candidates {
        if let Some(pos) = find_word(sentence, alias) {
            return Some((canonical, &sentence[pos..pos + alias.len()]));
        }
    }
    if sentence.to_lowercase().contains("unclear location")
        || sentence.to_lowercase().contains("uncertain location")
    {
        return Some(("unclear".to_string(), "unclear"));
    }
    None
}

/// Tip clause the generator renders. Values that read as positional phrases
/// skip the "in the" article.
pub fn render_tip_clause(tip_value: &str) -> String {
    const PHRASE_STARTS: [&str; 16] = [
        "between", "outside", "above", "below", "a little", "too ", "up into", "in the",
        "correctly", "crosses", "side port", "adjacent", "out-of-view", "post-pyloric",
        "arterial", "extravascular",
    ];
    let lower = tip_value.to_lowercase();
    if PHRASE_STARTS.iter().any(|p| lower.starts_with(p)) {
        format!(" with tip {tip_value}")
    } else if matches!(lower.as_str(), "upper" | "lower" | "middle") {
        format!(" with tip in the {tip_value} hemithorax")
    } else {
        format!(" with tip in the {tip_value}")
    }
}

/// Fixed filler sentences: no type synonyms, change keywords, side words or
/// placement markers.
pub const FILLER_SENTENCES: [&str; 4] = [
    "The lungs are clear.",
    "Normal cardiomediastinal silhouette.",
    "No pneumothorax or pleural effusion.",
    "The cardiac silhouette is within normal limits.",
];
