//! Tip-location vocabulary and the tip-to-placement map.
//!
//! The vocabulary lives in a versioned TSV asset (`assets/tip_placements_v1.tsv`)
//! rather than in code so it can be audited line by line. Each row is
//! `<type>\t<tip value>\t<C|I>`. Types without rows (tracheostomy tubes and
//! mediastinal drains) admit no tip locations beyond "unclear"/"N/A".

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

use super::{LTType, PlacementLabel};

/// Version tag of the embedded vocabulary asset.
pub const VOCAB_VERSION: &str = "v1";

const EMBEDDED_TSV: &str = include_str!("../../assets/tip_placements_v1.tsv");

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("line {line}: expected 3 tab-separated fields, got {got}")]
    BadRow { line: usize, got: usize },
    #[error("line {line}: unknown L&T type {name:?}")]
    UnknownType { line: usize, name: String },
    #[error("line {line}: placement letter must be C or I, got {got:?}")]
    BadLetter { line: usize, got: String },
    #[error("line {line}: duplicate entry for ({lt_type}, {tip:?})")]
    Duplicate {
        line: usize,
        lt_type: LTType,
        tip: String,
    },
    #[error("type {lt_type} admits no tip vocabulary but has rows")]
    UnexpectedRows { lt_type: LTType },
}

/// Total map from (type, in-vocabulary tip value) to correct/incorrect.
#[derive(Debug, Clone)]
pub struct PlacementMap {
    entries: HashMap<(LTType, String), PlacementLabel>,
    by_type: HashMap<LTType, Vec<String>>,
}

impl PlacementMap {
    /// Parse a vocabulary TSV. Lines starting with `#` and blank lines are
    /// ignored.
    pub fn from_tsv(text: &str) -> Result<Self, VocabError> {
        let mut entries = HashMap::new();
        let mut by_type: HashMap<LTType, Vec<String>> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(VocabError::BadRow {
                    line,
                    got: fields.len(),
                });
            }
            let lt_type = LTType::from_code(fields[0]).ok_or_else(|| VocabError::UnknownType {
                line,
                name: fields[0].to_string(),
            })?;
            let tip = fields[1].to_string();
            let placement = match fields[2].trim() {
                "C" => PlacementLabel::Correct,
                "I" => PlacementLabel::Incorrect,
                other => {
                    return Err(VocabError::BadLetter {
                        line,
                        got: other.to_string(),
                    })
                }
            };
            if !lt_type.has_tip_vocabulary() {
                return Err(VocabError::UnexpectedRows { lt_type });
            }
            if entries.insert((lt_type, tip.clone()), placement).is_some() {
                return Err(VocabError::Duplicate { line, lt_type, tip });
            }
            by_type.entry(lt_type).or_default().push(tip);
        }
        Ok(Self { entries, by_type })
    }

    /// Placement for an in-vocabulary tip value, `None` if out of vocabulary.
    pub fn get(&self, lt_type: LTType, tip_value: &str) -> Option<PlacementLabel> {
        self.entries.get(&(lt_type, tip_value.to_string())).copied()
    }

    pub fn contains(&self, lt_type: LTType, tip_value: &str) -> bool {
        self.get(lt_type, tip_value).is_some()
    }

    /// Tip values registered for a type, in asset order. Empty for types
    /// without a tip vocabulary.
    pub fn tips_for(&self, lt_type: LTType) -> &[String] {
        self.by_type.get(&lt_type).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All (type, tip, placement) rows, in asset order per type.
    pub fn iter(&self) -> impl Iterator<Item = (LTType, &str, PlacementLabel)> + '_ {
        LTType::ALL.iter().flat_map(move |&t| {
            self.tips_for(t)
                .iter()
                .map(move |tip| (t, tip.as_str(), self.entries[&(t, tip.clone())]))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The embedded vocabulary, parsed once.
pub fn placement_map() -> &'static PlacementMap {
    static MAP: OnceLock<PlacementMap> = OnceLock::new();
    MAP.get_or_init(|| PlacementMap::from_tsv(EMBEDDED_TSV).expect("embedded vocabulary is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_vocabulary_parses() {
        let map = placement_map();
        // 16 CVC + 16 PICC + 7 chest tube + 6 ETT + 4 IABP + 9 NGT + 11 SGC.
        assert_eq!(map.len(), 69);
        assert!(map.tips_for(LTType::TracheostomyTube).is_empty());
        assert!(map.tips_for(LTType::MediastinalDrain).is_empty());
        assert_eq!(map.tips_for(LTType::Cvc).len(), 16);
        assert_eq!(map.tips_for(LTType::Picc), map.tips_for(LTType::Cvc));
    }

    #[test]
    fn spot_checks() {
        let map = placement_map();
        assert_eq!(
            map.get(LTType::Cvc, "azygos vein"),
            Some(PlacementLabel::Incorrect)
        );
        assert_eq!(
            map.get(LTType::Ngt, "post-pyloric"),
            Some(PlacementLabel::Correct)
        );
        assert_eq!(
            map.get(LTType::Sgc, "main pulmonary artery"),
            Some(PlacementLabel::Correct)
        );
        assert_eq!(map.get(LTType::Ett, "stomach"), None);
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(PlacementMap::from_tsv("CVC\tonly two").is_err());
        assert!(PlacementMap::from_tsv("XYZ\ttip\tC").is_err());
        assert!(PlacementMap::from_tsv("CVC\ttip\tX").is_err());
        assert!(PlacementMap::from_tsv("CVC\ttip\tC\nCVC\ttip\tI").is_err());
        assert!(PlacementMap::from_tsv("TracheostomyTube\ttip\tC").is_err());
    }
}
