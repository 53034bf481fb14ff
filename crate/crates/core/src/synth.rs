//! Synthetic (ground truth, findings text) generator and controlled
//! perturbations.
//!
//! The template grammar is deliberately narrow: one sentence per instance,
//! fixed phrasing per type, rendered from the same tables the rule-based
//! backend parses with, so rendered text extracts back to exactly the
//! generating labels. Perturbations edit the structured report and the text
//! consistently, which makes expected metric deltas computable in closed
//! form.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::grammar::{
    render_change_token, render_placement_marker, render_side_phrase, render_tip_clause,
    render_type_phrase, split_sentences, FILLER_SENTENCES,
};
use crate::metrics::stream_rng;
use crate::prompts::STAGE1_TYPE_NAMES;
use crate::schema::{
    placement_for_tip, placement_map, ChangeLabel, CvcSubtype, Evidence, LTInstance, LTType,
    PlacementLabel, SideLabel, StructuredLTReport, TipLabel, TipValue,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid case spec: {0}")]
    InvalidSpec(String),
    #[error("perturbation target {index} out of range (report has {len} instances)")]
    UnresolvedTarget { index: usize, len: usize },
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("text was not rendered by this grammar: {0}")]
    TextMismatch(String),
}

/// Knobs for one synthetic case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseSpec {
    pub seed: u64,
    pub min_instances: usize,
    pub max_instances: usize,
    /// Relative weights over the nine types; zero excludes a type.
    pub type_weights: Vec<(LTType, f64)>,
    /// Probability that an in-vocabulary tip is drawn from the incorrect
    /// set (conditional on the instance getting an in-vocabulary tip).
    pub incorrect_placement_rate: f64,
    pub change_weights: Vec<(ChangeLabel, f64)>,
    pub include_normal_filler: bool,
}

impl Default for CaseSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            min_instances: 0,
            max_instances: 4,
            type_weights: LTType::ALL.iter().map(|&t| (t, 1.0)).collect(),
            incorrect_placement_rate: 0.084,
            change_weights: vec![
                (ChangeLabel::NotSpecified, 0.3),
                (ChangeLabel::New, 0.2),
                (ChangeLabel::Unchanged, 0.2),
                (ChangeLabel::Removed, 0.1),
                (ChangeLabel::Moved, 0.1),
                (ChangeLabel::Unclear, 0.1),
            ],
            include_normal_filler: true,
        }
    }
}

impl CaseSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.min_instances > self.max_instances {
            return Err(SynthError::InvalidSpec(
                "min_instances exceeds max_instances".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.incorrect_placement_rate) {
            return Err(SynthError::InvalidSpec(
                "incorrect_placement_rate must be in [0, 1]".to_string(),
            ));
        }
        let check = |weights: &[f64], what: &str| -> Result<(), SynthError> {
            if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                return Err(SynthError::InvalidSpec(format!(
                    "{what} weights must be finite and non-negative"
                )));
            }
            if weights.iter().sum::<f64>() <= 0.0 {
                return Err(SynthError::InvalidSpec(format!(
                    "{what} weights must not all be zero"
                )));
            }
            Ok(())
        };
        check(
            &self.type_weights.iter().map(|(_, w)| *w).collect::<Vec<_>>(),
            "type",
        )?;
        check(
            &self
                .change_weights
                .iter()
                .map(|(_, w)| *w)
                .collect::<Vec<_>>(),
            "change",
        )
    }
}

/// A targeted edit applied consistently to labels and text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Perturbation {
    pub target: usize,
    pub kind: PerturbationKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PerturbationKind {
    SubstituteType(LTType),
    FlipChange(ChangeLabel),
    FlipPlacement(PlacementLabel),
    DropInstance,
    AddInstance(Box<LTInstance>),
    AlterTip(String),
}

/// Attribute bundle an instance is built from.
#[derive(Debug, Clone)]
struct Draft {
    lt_type: LTType,
    subtype: Option<CvcSubtype>,
    side: SideLabel,
    change: ChangeLabel,
    tip: TipLabel,
    placement: PlacementLabel,
}

impl Draft {
    fn from_instance(inst: &LTInstance) -> Self {
        Self {
            lt_type: inst.lt_type(),
            subtype: inst.cvc_subtype(),
            side: inst.side(),
            change: inst.change(),
            tip: inst.tip().clone(),
            placement: inst.placement(),
        }
    }

    fn overridden(&self) -> bool {
        matches!(
            self.placement,
            PlacementLabel::Correct | PlacementLabel::Incorrect
        ) && self.tip.is_location()
            && placement_for_tip(self.lt_type, &self.tip) != self.placement
    }

    fn render(&self) -> String {
        let mut sentence = String::from(render_change_token(self.change));
        sentence.push(' ');
        sentence.push_str(render_side_phrase(self.side));
        sentence.push_str(render_type_phrase(self.lt_type, self.subtype));
        match self.tip.value() {
            TipValue::Location(value) => sentence.push_str(&render_tip_clause(value)),
            TipValue::Unclear => sentence.push_str(" with tip in an unclear location"),
            TipValue::NotSpecified => {}
        }
        if self.placement != placement_for_tip(self.lt_type, &self.tip) {
            if let Some(marker) = render_placement_marker(self.placement) {
                sentence.push_str("; ");
                sentence.push_str(marker);
            }
        }
        sentence.push('.');
        sentence
    }

    fn build(&self) -> LTInstance {
        let sentence = self.render();
        let tip_freetext = match self.tip.value() {
            TipValue::Location(v) => v.clone(),
            TipValue::Unclear => "unclear".to_string(),
            TipValue::NotSpecified => "N/A".to_string(),
        };
        let change_freetext = if self.change == ChangeLabel::NotSpecified {
            "N/A".to_string()
        } else {
            self.change.as_str().to_string()
        };
        LTInstance::new(
            self.lt_type,
            self.subtype,
            self.side,
            self.change,
            self.tip.clone(),
            self.placement,
            self.overridden(),
            Evidence {
                reference_sentence: sentence,
                type_freetext: render_type_phrase(self.lt_type, self.subtype).to_string(),
                tip_freetext,
                change_freetext,
            },
        )
        .expect("drafts are constructed valid")
    }
}

fn stage1_slot(lt_type: LTType) -> usize {
    STAGE1_TYPE_NAMES
        .iter()
        .position(|&n| n == lt_type.stage1_name())
        .expect("every type has a stage-1 slot")
}

fn sample_draft<R: Rng>(spec: &CaseSpec, rng: &mut R) -> Draft {
    let type_dist =
        WeightedIndex::new(spec.type_weights.iter().map(|(_, w)| *w)).expect("validated weights");
    let change_dist =
        WeightedIndex::new(spec.change_weights.iter().map(|(_, w)| *w)).expect("validated weights");
    let lt_type = spec.type_weights[type_dist.sample(rng)].0;
    let subtype = (lt_type == LTType::Cvc).then(|| {
        CvcSubtype::ALL[rng.gen_range(0..CvcSubtype::ALL.len())]
    });
    let side = match rng.gen_range(0..10) {
        0..=2 => SideLabel::Left,
        3..=5 => SideLabel::Right,
        6..=8 => SideLabel::NotSpecified,
        _ => SideLabel::Unclear,
    };
    let change = spec.change_weights[change_dist.sample(rng)].0;
    let tip = if change == ChangeLabel::Removed || !lt_type.has_tip_vocabulary() {
        TipLabel::not_specified(lt_type)
    } else {
        let roll: f64 = rng.gen();
        if roll < 0.05 {
            TipLabel::unclear(lt_type)
        } else if roll < 0.20 {
            TipLabel::not_specified(lt_type)
        } else {
            let want_incorrect = rng.gen_bool(spec.incorrect_placement_rate);
            let pool: Vec<&String> = placement_map()
                .tips_for(lt_type)
                .iter()
                .filter(|v| {
                    let incorrect = placement_map().get(lt_type, v)
                        == Some(PlacementLabel::Incorrect);
                    incorrect == want_incorrect
                })
                .collect();
            TipLabel::new(lt_type, pool[rng.gen_range(0..pool.len())])
                .expect("vocabulary value")
        }
    };
    let placement = placement_for_tip(lt_type, &tip);
    Draft {
        lt_type,
        subtype,
        side,
        change,
        tip,
        placement,
    }
}

fn assemble(
    report_id: String,
    mut drafts: Vec<Draft>,
    head_filler: Vec<String>,
    tail_filler: Vec<String>,
) -> (StructuredLTReport, String) {
    // Canonical order: stage-1 pass order, stable within a pass, so rule
    // extraction reproduces the instance list position for position.
    drafts.sort_by_key(|d| stage1_slot(d.lt_type));
    let instances: Vec<LTInstance> = drafts.iter().map(Draft::build).collect();
    let mut sentences = head_filler;
    sentences.extend(instances.iter().map(|i| i.reference_sentence().to_string()));
    sentences.extend(tail_filler);
    let text = if sentences.is_empty() {
        FILLER_SENTENCES[0].to_string()
    } else {
        sentences.join(" ")
    };
    (StructuredLTReport::new(report_id, instances), text)
}

/// Generate one (ground truth, findings text) pair. Deterministic in the
/// spec seed.
pub fn generate_case(spec: &CaseSpec) -> Result<(StructuredLTReport, String), SynthError> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let n = rng.gen_range(spec.min_instances..=spec.max_instances);
    let drafts: Vec<Draft> = (0..n).map(|_| sample_draft(spec, &mut rng)).collect();
    let (head, tail) = if spec.include_normal_filler {
        let head = FILLER_SENTENCES[rng.gen_range(0..FILLER_SENTENCES.len())].to_string();
        let tail = FILLER_SENTENCES[rng.gen_range(0..FILLER_SENTENCES.len())].to_string();
        (vec![head], vec![tail])
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(assemble(
        format!("synth-{:016x}", spec.seed),
        drafts,
        head,
        tail,
    ))
}

/// Generate a corpus of cases with per-case seeds derived from a base seed.
pub fn generate_corpus(
    template: &CaseSpec,
    count: usize,
    base_seed: u64,
) -> Result<Vec<(StructuredLTReport, String)>, SynthError> {
    (0..count)
        .map(|i| {
            let mut spec = template.clone();
            spec.seed = base_seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            generate_case(&spec)
        })
        .collect()
}

/// Apply perturbations to a (ground truth, text) pair, editing both sides
/// consistently. Filler sentences keep their positions; instance sentences
/// are re-rendered in canonical order.
pub fn perturb(
    gt: &StructuredLTReport,
    text: &str,
    ops: &[Perturbation],
) -> Result<(StructuredLTReport, String), SynthError> {
    // Recover filler positions by matching each instance's rendered sentence.
    let rendered: Vec<String> = gt
        .instances()
        .iter()
        .map(|i| Draft::from_instance(i).render())
        .collect();
    let mut head_filler: Vec<String> = Vec::new();
    let mut tail_filler: Vec<String> = Vec::new();
    let mut expected = rendered.iter();
    let mut next_expected = expected.next();
    let mut seen_instance = false;
    for sentence in split_sentences(text) {
        match next_expected {
            Some(want) if sentence == want => {
                seen_instance = true;
                next_expected = expected.next();
            }
            _ => {
                if seen_instance {
                    tail_filler.push(sentence.to_string());
                } else {
                    head_filler.push(sentence.to_string());
                }
            }
        }
    }
    if next_expected.is_some() {
        return Err(SynthError::TextMismatch(
            "instance sentences not found in text".to_string(),
        ));
    }

    let mut drafts: Vec<Draft> = gt.instances().iter().map(Draft::from_instance).collect();
    for op in ops {
        apply(&mut drafts, op)?;
    }
    Ok(assemble(
        gt.report_id().to_string(),
        drafts,
        head_filler,
        tail_filler,
    ))
}

fn apply(drafts: &mut Vec<Draft>, op: &Perturbation) -> Result<(), SynthError> {
    if let PerturbationKind::AddInstance(inst) = &op.kind {
        drafts.push(Draft::from_instance(inst));
        return Ok(());
    }
    let len = drafts.len();
    let draft = drafts
        .get_mut(op.target)
        .ok_or(SynthError::UnresolvedTarget {
            index: op.target,
            len,
        })?;
    match &op.kind {
        PerturbationKind::SubstituteType(new_type) => {
            if *new_type == draft.lt_type {
                return Err(SynthError::InvalidPerturbation(
                    "substitute_type must change the type".to_string(),
                ));
            }
            draft.lt_type = *new_type;
            draft.subtype = (*new_type == LTType::Cvc).then_some(CvcSubtype::UnspecifiedCvc);
            draft.tip = TipLabel::not_specified(*new_type);
            draft.placement = PlacementLabel::NotSpecified;
        }
        PerturbationKind::FlipChange(new_change) => {
            if *new_change == draft.change {
                return Err(SynthError::InvalidPerturbation(
                    "flip_change must change the label".to_string(),
                ));
            }
            draft.change = *new_change;
            if *new_change == ChangeLabel::Removed {
                draft.tip = TipLabel::not_specified(draft.lt_type);
                draft.placement = PlacementLabel::NotSpecified;
            }
        }
        PerturbationKind::FlipPlacement(new_placement) => {
            if draft.change == ChangeLabel::Removed {
                return Err(SynthError::InvalidPerturbation(
                    "removed instances carry no placement".to_string(),
                ));
            }
            if *new_placement == draft.placement {
                return Err(SynthError::InvalidPerturbation(
                    "flip_placement must change the label".to_string(),
                ));
            }
            if *new_placement == PlacementLabel::NotSpecified {
                return Err(SynthError::InvalidPerturbation(
                    "flip_placement cannot un-specify placement".to_string(),
                ));
            }
            draft.placement = *new_placement;
        }
        PerturbationKind::DropInstance => {
            drafts.remove(op.target);
        }
        PerturbationKind::AlterTip(value) => {
            if draft.change == ChangeLabel::Removed {
                return Err(SynthError::InvalidPerturbation(
                    "removed instances carry no tip".to_string(),
                ));
            }
            let tip = TipLabel::new(draft.lt_type, value).map_err(|e| {
                SynthError::InvalidPerturbation(format!("alter_tip: {e}"))
            })?;
            if tip.as_str() == draft.tip.as_str() {
                return Err(SynthError::InvalidPerturbation(
                    "alter_tip must change the tip".to_string(),
                ));
            }
            draft.tip = tip;
            draft.placement = placement_for_tip(draft.lt_type, &draft.tip);
        }
        PerturbationKind::AddInstance(_) => unreachable!("handled above"),
    }
    Ok(())
}
