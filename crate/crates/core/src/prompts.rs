//! Versioned prompt assets.
//!
//! Prompts are shipped as files under `prompts/<version>/` and embedded at
//! compile time so a build is always self-contained. The version string is
//! part of every extraction cache key and run manifest.

/// Version tag of the embedded prompt set.
pub const PROMPT_VERSION: &str = "v1";

/// Report-section cleaning prompt for reports written before the EHR switch.
pub const CLEAN_PRE_EPIC: &str = include_str!("../prompts/v1/clean_pre_epic.txt");

/// Report-section cleaning prompt for reports written after the EHR switch.
pub const CLEAN_POST_EPIC: &str = include_str!("../prompts/v1/clean_post_epic.txt");

/// Section-merge prompt: returns content of one section not covered by the
/// other, formatted so it can be appended.
pub const MERGE_SECTIONS: &str = include_str!("../prompts/v1/merge_sections.txt");

/// Stage-1 prompt: which L&T types does the report mention.
pub const STAGE1_TYPES: &str = include_str!("../prompts/v1/stage1_types.txt");

/// Error-category classification prompt (pathological vs. lines/tubes).
pub const CLASSIFY_ERROR: &str = include_str!("../prompts/v1/classify_error.txt");

const STAGE2_CVC: &str = include_str!("../prompts/v1/stage2_cvc.txt");
const STAGE2_ETT: &str = include_str!("../prompts/v1/stage2_ett.txt");
const STAGE2_TRACHEOSTOMY: &str = include_str!("../prompts/v1/stage2_tracheostomy_tube.txt");
const STAGE2_NGT: &str = include_str!("../prompts/v1/stage2_ngt.txt");
const STAGE2_SGC: &str = include_str!("../prompts/v1/stage2_sgc.txt");
const STAGE2_CHEST_TUBE: &str = include_str!("../prompts/v1/stage2_chest_tube.txt");
const STAGE2_MEDIASTINAL_DRAIN: &str = include_str!("../prompts/v1/stage2_mediastinal_drain.txt");
const STAGE2_IABP: &str = include_str!("../prompts/v1/stage2_iabp.txt");

/// The eight type names the stage-1 prompt is allowed to emit, in prompt order.
pub const STAGE1_TYPE_NAMES: [&str; 8] = [
    "Central Venous Catheter",
    "Endotracheal Tube",
    "Tracheostomy Tube",
    "Nasogastric Tube",
    "Swan-Ganz Catheter",
    "Chest Tube",
    "Mediastinal Drain",
    "Intra-Aortic Balloon Pump",
];

/// Stage-2 prompt for a stage-1 type name. The CVC pass also covers PICCs.
pub fn stage2_prompt(stage1_name: &str) -> Option<&'static str> {
    match stage1_name {
        "Central Venous Catheter" => Some(STAGE2_CVC),
        "Endotracheal Tube" => Some(STAGE2_ETT),
        "Tracheostomy Tube" => Some(STAGE2_TRACHEOSTOMY),
        "Nasogastric Tube" => Some(STAGE2_NGT),
        "Swan-Ganz Catheter" => Some(STAGE2_SGC),
        "Chest Tube" => Some(STAGE2_CHEST_TUBE),
        "Mediastinal Drain" => Some(STAGE2_MEDIASTINAL_DRAIN),
        "Intra-Aortic Balloon Pump" => Some(STAGE2_IABP),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_stage1_name_has_a_stage2_prompt() {
        for name in STAGE1_TYPE_NAMES {
            let prompt = stage2_prompt(name).expect(name);
            assert!(prompt.contains("# JSON entry fields"), "{name}");
            assert!(prompt.contains("reference_sentence"), "{name}");
        }
        assert!(stage2_prompt("Pacemaker").is_none());
    }

    #[test]
    fn cvc_prompt_carries_the_tip_mapping() {
        let p = stage2_prompt("Central Venous Catheter").unwrap();
        assert!(p.contains("'superior vena cava': 'correct'"));
        assert!(p.contains("'azygos vein': 'incorrect'"));
    }
}
