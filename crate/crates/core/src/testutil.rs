//! Shared helpers for unit tests.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::metrics::matching::{MatchResult, MatchedPair};
use crate::schema::{
    ChangeLabel, CvcSubtype, Evidence, LTInstance, LTType, PlacementLabel, SideLabel, TipLabel,
    placement_for_tip,
};
use crate::schema::StructuredLTReport;

/// Build a valid instance from label strings; placement follows the tip map.
pub fn instance(lt_type: LTType, side: &str, change: &str, tip: &str) -> LTInstance {
    let subtype = (lt_type == LTType::Cvc).then_some(CvcSubtype::UnspecifiedCvc);
    let tip = TipLabel::new(lt_type, tip).expect("tip in vocabulary");
    let placement = placement_for_tip(lt_type, &tip);
    LTInstance::new(
        lt_type,
        subtype,
        SideLabel::parse(side).expect("valid side"),
        ChangeLabel::parse(change).expect("valid change"),
        tip,
        placement,
        false,
        Evidence::default(),
    )
    .expect("valid instance")
}

/// Same as [`instance`] but with an explicit placement (override flag set
/// when it conflicts with the tip map).
pub fn instance_with_placement(
    lt_type: LTType,
    side: &str,
    change: &str,
    tip: &str,
    placement: PlacementLabel,
) -> LTInstance {
    let subtype = (lt_type == LTType::Cvc).then_some(CvcSubtype::UnspecifiedCvc);
    let tip = TipLabel::new(lt_type, tip).expect("tip in vocabulary");
    let conflicts = tip.is_location()
        && matches!(
            placement,
            PlacementLabel::Correct | PlacementLabel::Incorrect
        )
        && placement_for_tip(lt_type, &tip) != placement;
    LTInstance::new(
        lt_type,
        subtype,
        SideLabel::parse(side).expect("valid side"),
        ChangeLabel::parse(change).expect("valid change"),
        tip,
        placement,
        conflicts,
        Evidence::default(),
    )
    .expect("valid instance")
}

/// Wrap instances in a report with a fresh unique id.
pub fn report_of(instances: Vec<LTInstance>) -> StructuredLTReport {
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let id = NEXT.fetch_add(1, Ordering::Relaxed);
    StructuredLTReport::new(format!("test-{id}"), instances)
}

/// A match result whose pairs carry the given (pred, ref) change labels.
pub fn pair_from_labels(labels: Vec<(ChangeLabel, ChangeLabel)>) -> MatchResult {
    MatchResult {
        pairs: labels
            .into_iter()
            .enumerate()
            .map(|(i, (pred_change, ref_change))| MatchedPair {
                pred_index: i,
                ref_index: i,
                metric_type: LTType::Cvc,
                pred_side: SideLabel::NotSpecified,
                ref_side: SideLabel::NotSpecified,
                pred_change,
                ref_change,
                pred_placement: PlacementLabel::NotSpecified,
                ref_placement: PlacementLabel::NotSpecified,
                tip_agrees: true,
            })
            .collect(),
        unmatched_pred: Vec::new(),
        unmatched_ref: Vec::new(),
    }
}
