//! Data model for structured lines-and-tubes reports: label vocabularies,
//! instances, reports, and the deterministic tip-to-placement mapping.
//!
//! All types are immutable after construction and safe to share across
//! threads. The JSON field names of [`LTInstance`] follow the stage-2
//! extraction prompt exactly (`reference_sentence`, `type`, `tip`, `change`,
//! `side_categorical`, `type_categorical`, `tip_categorical`,
//! `change_categorical`, `placement`).

pub mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use vocab::{placement_map, PlacementMap, VocabError, VOCAB_VERSION};

/// The nine line/tube types the metric vocabulary distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LTType {
    Cvc,
    Picc,
    ChestTube,
    Ett,
    Iabp,
    Ngt,
    Sgc,
    TracheostomyTube,
    MediastinalDrain,
}

impl LTType {
    pub const ALL: [LTType; 9] = [
        LTType::Cvc,
        LTType::Picc,
        LTType::ChestTube,
        LTType::Ett,
        LTType::Iabp,
        LTType::Ngt,
        LTType::Sgc,
        LTType::TracheostomyTube,
        LTType::MediastinalDrain,
    ];

    /// Short code used in the vocabulary asset and metric names.
    pub fn code(self) -> &'static str {
        match self {
            LTType::Cvc => "CVC",
            LTType::Picc => "PICC",
            LTType::ChestTube => "ChestTube",
            LTType::Ett => "ETT",
            LTType::Iabp => "IABP",
            LTType::Ngt => "NGT",
            LTType::Sgc => "SGC",
            LTType::TracheostomyTube => "TracheostomyTube",
            LTType::MediastinalDrain => "MediastinalDrain",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        LTType::ALL.iter().copied().find(|t| t.code() == code)
    }

    /// Whether the type has any in-vocabulary tip locations at all.
    pub fn has_tip_vocabulary(self) -> bool {
        !matches!(self, LTType::TracheostomyTube | LTType::MediastinalDrain)
    }

    /// Stage-1 prompt name the type is established under. PICCs are resolved
    /// within the CVC pass.
    pub fn stage1_name(self) -> &'static str {
        match self {
            LTType::Cvc | LTType::Picc => "Central Venous Catheter",
            LTType::ChestTube => "Chest Tube",
            LTType::Ett => "Endotracheal Tube",
            LTType::Iabp => "Intra-Aortic Balloon Pump",
            LTType::Ngt => "Nasogastric Tube",
            LTType::Sgc => "Swan-Ganz Catheter",
            LTType::TracheostomyTube => "Tracheostomy Tube",
            LTType::MediastinalDrain => "Mediastinal Drain",
        }
    }

    fn index(self) -> usize {
        LTType::ALL.iter().position(|&t| t == self).unwrap()
    }
}

impl fmt::Display for LTType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// CVC entry-point subtype, present exactly when the type is CVC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CvcSubtype {
    IjCvc,
    SubclavianOrPortACath,
    FemoralCvc,
    UnspecifiedCvc,
}

impl CvcSubtype {
    pub const ALL: [CvcSubtype; 4] = [
        CvcSubtype::IjCvc,
        CvcSubtype::SubclavianOrPortACath,
        CvcSubtype::FemoralCvc,
        CvcSubtype::UnspecifiedCvc,
    ];
}

macro_rules! string_label {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant,)+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text,)+
                }
            }

            pub fn parse(text: &str) -> Option<Self> {
                match text {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

string_label!(
    /// Insertion side. `N/A` is a first-class label, not an absence.
    SideLabel {
        Left => "left",
        Right => "right",
        Unclear => "unclear",
        NotSpecified => "N/A",
    }
);

string_label!(
    /// Longitudinal change relative to the prior study.
    ChangeLabel {
        New => "new",
        Moved => "moved",
        Removed => "removed",
        Unchanged => "unchanged",
        Unclear => "unclear",
        NotSpecified => "N/A",
    }
);

string_label!(
    /// Whether the device tip position is clinically acceptable.
    PlacementLabel {
        Correct => "correct",
        Incorrect => "incorrect",
        Unclear => "unclear",
        NotSpecified => "N/A",
    }
);

/// Categorical tip location, constrained to the owning type's vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TipLabel {
    lt_type: LTType,
    value: TipValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TipValue {
    /// An in-vocabulary tip location.
    Location(String),
    Unclear,
    NotSpecified,
}

impl TipLabel {
    /// Build a tip label, rejecting values outside the type's vocabulary.
    pub fn new(lt_type: LTType, value: &str) -> Result<Self, ValidationError> {
        match value {
            "unclear" => Ok(Self {
                lt_type,
                value: TipValue::Unclear,
            }),
            "N/A" => Ok(Self {
                lt_type,
                value: TipValue::NotSpecified,
            }),
            other if placement_map().contains(lt_type, other) => Ok(Self {
                lt_type,
                value: TipValue::Location(other.to_string()),
            }),
            other => Err(ValidationError::single(
                "tip_categorical",
                format!("{other:?} is not in the {lt_type} tip vocabulary"),
            )),
        }
    }

    pub fn unclear(lt_type: LTType) -> Self {
        Self {
            lt_type,
            value: TipValue::Unclear,
        }
    }

    pub fn not_specified(lt_type: LTType) -> Self {
        Self {
            lt_type,
            value: TipValue::NotSpecified,
        }
    }

    pub fn lt_type(&self) -> LTType {
        self.lt_type
    }

    pub fn value(&self) -> &TipValue {
        &self.value
    }

    pub fn as_str(&self) -> &str {
        match &self.value {
            TipValue::Location(s) => s,
            TipValue::Unclear => "unclear",
            TipValue::NotSpecified => "N/A",
        }
    }

    pub fn is_location(&self) -> bool {
        matches!(self.value, TipValue::Location(_))
    }
}

/// Deterministic tip-to-placement lookup. Total over all constructible tips:
/// in-vocabulary locations map per the vocabulary asset, `unclear` maps to
/// unclear and `N/A` to N/A.
pub fn placement_for_tip(lt_type: LTType, tip: &TipLabel) -> PlacementLabel {
    debug_assert_eq!(tip.lt_type(), lt_type);
    match &tip.value {
        TipValue::Location(s) => placement_map()
            .get(lt_type, s)
            .expect("TipLabel construction guarantees vocabulary membership"),
        TipValue::Unclear => PlacementLabel::Unclear,
        TipValue::NotSpecified => PlacementLabel::NotSpecified,
    }
}

/// The type a given (type, subtype) pair counts as in the metric vocabulary.
/// CVC subtypes collapse into CVC; every other type maps to itself.
pub fn metric_type_of(lt_type: LTType, _cvc_subtype: Option<CvcSubtype>) -> LTType {
    lt_type
}

/// Report-level device-count bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CountBucket {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3-or-more")]
    ThreeOrMore,
}

impl CountBucket {
    pub const ALL: [CountBucket; 4] = [
        CountBucket::Zero,
        CountBucket::One,
        CountBucket::Two,
        CountBucket::ThreeOrMore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CountBucket::Zero => "0",
            CountBucket::One => "1",
            CountBucket::Two => "2",
            CountBucket::ThreeOrMore => "3-or-more",
        }
    }
}

/// Bucket a device count as 0, 1, 2 or 3-or-more.
pub fn count_bucket(n: usize) -> CountBucket {
    match n {
        0 => CountBucket::Zero,
        1 => CountBucket::One,
        2 => CountBucket::Two,
        _ => CountBucket::ThreeOrMore,
    }
}

/// The twelve `type_categorical` strings of the stage-2 prompts, mapped to
/// (type, subtype) pairs.
const TYPE_CATEGORICAL: [(&str, LTType, Option<CvcSubtype>); 12] = [
    ("IJ CVC", LTType::Cvc, Some(CvcSubtype::IjCvc)),
    (
        "Subclavian CVC/Port-a-Cath",
        LTType::Cvc,
        Some(CvcSubtype::SubclavianOrPortACath),
    ),
    ("Femoral CVC", LTType::Cvc, Some(CvcSubtype::FemoralCvc)),
    (
        "Unspecified CVC",
        LTType::Cvc,
        Some(CvcSubtype::UnspecifiedCvc),
    ),
    ("PICC", LTType::Picc, None),
    ("Chest Tube", LTType::ChestTube, None),
    ("Endotracheal Tube", LTType::Ett, None),
    ("Intra-Aortic Balloon Pump", LTType::Iabp, None),
    ("Nasogastric Tube", LTType::Ngt, None),
    ("Swan-Ganz Catheter", LTType::Sgc, None),
    ("Tracheostomy Tube", LTType::TracheostomyTube, None),
    ("Mediastinal Drain", LTType::MediastinalDrain, None),
];

/// The `type_categorical` string for a (type, subtype) pair.
pub fn type_categorical(lt_type: LTType, cvc_subtype: Option<CvcSubtype>) -> &'static str {
    TYPE_CATEGORICAL
        .iter()
        .find(|(_, t, s)| *t == lt_type && *s == cvc_subtype)
        .map(|(name, _, _)| *name)
        .expect("subtype is present exactly for CVC")
}

/// Parse a `type_categorical` string into a (type, subtype) pair.
pub fn parse_type_categorical(text: &str) -> Option<(LTType, Option<CvcSubtype>)> {
    TYPE_CATEGORICAL
        .iter()
        .find(|(name, _, _)| *name == text)
        .map(|(_, t, s)| (*t, *s))
}

/// One line/tube occurrence extracted from a report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LTInstance {
    lt_type: LTType,
    cvc_subtype: Option<CvcSubtype>,
    side: SideLabel,
    change: ChangeLabel,
    tip: TipLabel,
    placement: PlacementLabel,
    placement_override: bool,
    reference_sentence: String,
    type_freetext: String,
    tip_freetext: String,
    change_freetext: String,
}

/// Free-text evidence carried alongside the categorical labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    pub reference_sentence: String,
    pub type_freetext: String,
    pub tip_freetext: String,
    pub change_freetext: String,
}

impl LTInstance {
    /// Build a validated instance. The subtype must be present exactly when
    /// the type is CVC, the tip must belong to the type, and a placement that
    /// disagrees with the tip mapping must carry the override flag.
    pub fn new(
        lt_type: LTType,
        cvc_subtype: Option<CvcSubtype>,
        side: SideLabel,
        change: ChangeLabel,
        tip: TipLabel,
        placement: PlacementLabel,
        placement_override: bool,
        evidence: Evidence,
    ) -> Result<Self, ValidationError> {
        let mut issues = Vec::new();
        if (lt_type == LTType::Cvc) != cvc_subtype.is_some() {
            issues.push(Issue::new(
                "type_categorical",
                format!("subtype must be present exactly for CVC (type is {lt_type})"),
            ));
        }
        if tip.lt_type() != lt_type {
            issues.push(Issue::new(
                "tip_categorical",
                format!("tip belongs to {} but instance is {lt_type}", tip.lt_type()),
            ));
        }
        if matches!(
            placement,
            PlacementLabel::Correct | PlacementLabel::Incorrect
        ) && tip.is_location()
            && !placement_override
            && placement_for_tip(lt_type, &tip) != placement
        {
            issues.push(Issue::new(
                "placement",
                format!(
                    "placement {placement} conflicts with the tip mapping ({}) and no override flag is set",
                    placement_for_tip(lt_type, &tip)
                ),
            ));
        }
        if !issues.is_empty() {
            return Err(ValidationError { issues });
        }
        Ok(Self {
            lt_type,
            cvc_subtype,
            side,
            change,
            tip,
            placement,
            placement_override,
            reference_sentence: evidence.reference_sentence,
            type_freetext: evidence.type_freetext,
            tip_freetext: evidence.tip_freetext,
            change_freetext: evidence.change_freetext,
        })
    }

    pub fn lt_type(&self) -> LTType {
        self.lt_type
    }

    pub fn cvc_subtype(&self) -> Option<CvcSubtype> {
        self.cvc_subtype
    }

    /// The type that counts for metrics: CVC subtypes collapse into CVC.
    pub fn metric_type(&self) -> LTType {
        metric_type_of(self.lt_type, self.cvc_subtype)
    }

    pub fn side(&self) -> SideLabel {
        self.side
    }

    pub fn change(&self) -> ChangeLabel {
        self.change
    }

    pub fn tip(&self) -> &TipLabel {
        &self.tip
    }

    pub fn placement(&self) -> PlacementLabel {
        self.placement
    }

    /// True when the stored placement was kept despite disagreeing with the
    /// tip mapping (the report stated placement explicitly).
    pub fn placement_override(&self) -> bool {
        self.placement_override
    }

    pub fn reference_sentence(&self) -> &str {
        &self.reference_sentence
    }

    pub fn type_freetext(&self) -> &str {
        &self.type_freetext
    }

    pub fn tip_freetext(&self) -> &str {
        &self.tip_freetext
    }

    pub fn change_freetext(&self) -> &str {
        &self.change_freetext
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Wire form of an instance, field names per the stage-2 prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RawInstance {
    pub reference_sentence: String,
    #[serde(rename = "type")]
    pub type_freetext: String,
    pub tip: String,
    pub change: String,
    pub side_categorical: String,
    pub type_categorical: String,
    pub tip_categorical: String,
    pub change_categorical: String,
    pub placement: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub placement_override: bool,
}

impl From<&LTInstance> for RawInstance {
    fn from(inst: &LTInstance) -> Self {
        RawInstance {
            reference_sentence: inst.reference_sentence.clone(),
            type_freetext: inst.type_freetext.clone(),
            tip: inst.tip_freetext.clone(),
            change: inst.change_freetext.clone(),
            side_categorical: inst.side.as_str().to_string(),
            type_categorical: type_categorical(inst.lt_type, inst.cvc_subtype).to_string(),
            tip_categorical: inst.tip.as_str().to_string(),
            change_categorical: inst.change.as_str().to_string(),
            placement: inst.placement.as_str().to_string(),
            placement_override: inst.placement_override,
        }
    }
}

impl RawInstance {
    /// Validate into an [`LTInstance`], collecting one issue per bad field.
    /// A placement that conflicts with the tip mapping is retained and the
    /// override flag is set, rather than rejected.
    pub(crate) fn validate(&self, path: &str) -> Result<LTInstance, ValidationError> {
        let mut issues = Vec::new();
        let type_pair = parse_type_categorical(&self.type_categorical);
        if type_pair.is_none() {
            issues.push(Issue::new(
                format!("{path}.type_categorical"),
                format!("unknown type category {:?}", self.type_categorical),
            ));
        }
        let side = SideLabel::parse(&self.side_categorical);
        if side.is_none() {
            issues.push(Issue::new(
                format!("{path}.side_categorical"),
                format!("unknown side {:?}", self.side_categorical),
            ));
        }
        let change = ChangeLabel::parse(&self.change_categorical);
        if change.is_none() {
            issues.push(Issue::new(
                format!("{path}.change_categorical"),
                format!("unknown change {:?}", self.change_categorical),
            ));
        }
        let placement = PlacementLabel::parse(&self.placement);
        if placement.is_none() {
            issues.push(Issue::new(
                format!("{path}.placement"),
                format!("unknown placement {:?}", self.placement),
            ));
        }
        let tip = type_pair.and_then(|(lt_type, _)| {
            match TipLabel::new(lt_type, &self.tip_categorical) {
                Ok(tip) => Some(tip),
                Err(err) => {
                    issues.extend(err.issues.into_iter().map(|i| Issue {
                        path: format!("{path}.{}", i.path),
                        message: i.message,
                    }));
                    None
                }
            }
        });
        if !issues.is_empty() {
            return Err(ValidationError { issues });
        }
        let (lt_type, cvc_subtype) = type_pair.unwrap();
        let (tip, placement) = (tip.unwrap(), placement.unwrap());
        let mapped = placement_for_tip(lt_type, &tip);
        let conflicts = matches!(
            placement,
            PlacementLabel::Correct | PlacementLabel::Incorrect
        ) && tip.is_location()
            && mapped != placement;
        LTInstance::new(
            lt_type,
            cvc_subtype,
            side.unwrap(),
            change.unwrap(),
            tip,
            placement,
            self.placement_override || conflicts,
            Evidence {
                reference_sentence: self.reference_sentence.clone(),
                type_freetext: self.type_freetext.clone(),
                tip_freetext: self.tip.clone(),
                change_freetext: self.change.clone(),
            },
        )
        .map_err(|err| ValidationError {
            issues: err
                .issues
                .into_iter()
                .map(|i| Issue {
                    path: format!("{path}.{}", i.path),
                    message: i.message,
                })
                .collect(),
        })
    }
}

impl Serialize for LTInstance {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawInstance::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LTInstance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawInstance::deserialize(deserializer)?;
        raw.validate("instance").map_err(serde::de::Error::custom)
    }
}

/// The set of instances extracted from one free-text report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredLTReport {
    report_id: String,
    instances: Vec<LTInstance>,
}

impl StructuredLTReport {
    pub fn new(report_id: impl Into<String>, instances: Vec<LTInstance>) -> Self {
        let report_id = report_id.into();
        assert!(!report_id.is_empty(), "report_id must be non-empty");
        Self {
            report_id,
            instances,
        }
    }

    pub fn report_id(&self) -> &str {
        &self.report_id
    }

    pub fn instances(&self) -> &[LTInstance] {
        &self.instances
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    /// Instance count per metric type, indexed by [`LTType::ALL`] order.
    pub fn type_counts(&self) -> [usize; 9] {
        let mut counts = [0usize; 9];
        for inst in &self.instances {
            counts[inst.metric_type().index()] += 1;
        }
        counts
    }
}

/// Validate a parsed JSON array of instance objects into a report.
/// Vocabulary violations are collected across all elements with field paths.
pub fn validate_structured_report(
    report_id: &str,
    raw: &Value,
) -> Result<StructuredLTReport, ValidationError> {
    let array = raw.as_array().ok_or_else(|| {
        ValidationError::single("$", format!("expected a JSON array, got {raw}"))
    })?;
    let mut instances = Vec::with_capacity(array.len());
    let mut issues = Vec::new();
    for (idx, element) in array.iter().enumerate() {
        let path = format!("$[{idx}]");
        let raw_inst: RawInstance = match serde_json::from_value(element.clone()) {
            Ok(r) => r,
            Err(err) => {
                issues.push(Issue::new(path, err.to_string()));
                continue;
            }
        };
        match raw_inst.validate(&path) {
            Ok(inst) => instances.push(inst),
            Err(err) => issues.extend(err.issues),
        }
    }
    if !issues.is_empty() {
        return Err(ValidationError { issues });
    }
    Ok(StructuredLTReport::new(report_id, instances))
}

/// One offending field with its JSON path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl Issue {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Validation failure listing every offending field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl ValidationError {
    fn single(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            issues: vec![Issue::new(path, message)],
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation issue(s):", self.issues.len())?;
        for issue in &self.issues {
            write!(f, " [{}] {};", issue.path, issue.message)?;
        }
        Ok(())
    }
}
