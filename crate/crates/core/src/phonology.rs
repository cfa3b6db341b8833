//! Phonological property inventory.
//!
//! Six manual properties are modelled, each with a closed value inventory.
//! The built-in taxonomy embeds every value of the ASL-Lex coding scheme
//! together with how many WLASL-Lex videos carry it. Values with a
//! cardinality of zero are still legal codes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of videos in the cross-referenced corpus.
pub const CORPUS_VIDEOS: u64 = 10017;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PhonologyError {
    #[error("unknown value {code:?} for property {kind}")]
    UnknownValue { kind: PropertyKind, code: String },
    #[error("unknown property kind {0:?}")]
    UnknownKind(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("duplicate value {code:?} for property {kind}")]
    DuplicateValue { kind: PropertyKind, code: String },
    #[error("taxonomy is missing property {0}")]
    MissingKind(PropertyKind),
    #[error("invalid taxonomy json: {0}")]
    Json(String),
}

/// The six phonological properties, in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Flexion,
    MajorLocation,
    MinorLocation,
    Movement,
    SelectedFingers,
    SignType,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 6] = [
        PropertyKind::Flexion,
        PropertyKind::MajorLocation,
        PropertyKind::MinorLocation,
        PropertyKind::Movement,
        PropertyKind::SelectedFingers,
        PropertyKind::SignType,
    ];

    /// Position in [`PropertyKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Snake-case identifier used in CSV headers, JSON keys and CLI flags.
    pub fn as_str(self) -> &'static str {
        match self {
            PropertyKind::Flexion => "flexion",
            PropertyKind::MajorLocation => "major_location",
            PropertyKind::MinorLocation => "minor_location",
            PropertyKind::Movement => "movement",
            PropertyKind::SelectedFingers => "selected_fingers",
            PropertyKind::SignType => "sign_type",
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropertyKind {
    type Err = PhonologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        PropertyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| PhonologyError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyValue {
    pub kind: PropertyKind,
    pub code: String,
    pub definition: String,
    pub cardinality: u64,
}

/// Ordered value inventories for all six properties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    values: [Vec<PropertyValue>; 6],
}

/// A single value per property.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhonologicalLabel {
    codes: [String; 6],
}

impl PhonologicalLabel {
    /// Codes are given in [`PropertyKind::ALL`] order and trimmed.
    pub fn new<S: AsRef<str>>(codes: [S; 6]) -> Self {
        PhonologicalLabel {
            codes: codes.map(|c| c.as_ref().trim().to_string()),
        }
    }

    pub fn get(&self, kind: PropertyKind) -> &str {
        &self.codes[kind.index()]
    }

    pub fn codes(&self) -> &[String; 6] {
        &self.codes
    }
}

const fn v(code: &'static str, definition: &'static str, cardinality: u64) -> (&'static str, &'static str, u64) {
    (code, definition, cardinality)
}

type Row = (&'static str, &'static str, u64);

const FLEXION: &[Row] = &[
    v("1", "Fully open: no joints of selected fingers are flexed", 5037),
    v("2", "Bent (closed): non-base joints are flexed", 693),
    v("3", "Flat-open: base joints flexed less than 90 degrees", 909),
    v("4", "Flat-closed: base joints flexed equal to or more that 90 degrees", 507),
    v("5", "Curved open: base and non-base joints flexed without contact", 1130),
    v("6", "Curved closed: base and non-base joints flexed with contact", 642),
    v("7", "Fully closed: base and non-base joints fully flexed", 795),
    v("Stacked", "Stacked: Flexion of selected fingers differs", 123),
    v("Crossed", "Crossed", 181),
];

const MAJOR_LOCATION: &[Row] = &[
    v("Head", "Sign is produced on or near the head", 3137),
    v("Arm", "Sign is produced on or near the arm", 219),
    v("Body", "Sign is produced on or near the trunk", 1019),
    v("Hand", "Sign is produced on or near the non-dominant hand", 2194),
    v("Neutral", "Sign is not produced in another location on the body", 3448),
    v("Other", "Sign is produced in another unspecified location on the body", 0),
];

const MINOR_LOCATION: &[Row] = &[
    v("HeadTop", "Sign is produced on top of the head", 20),
    v("Forehead", "Sign is produced at the forehead", 246),
    v("Eye", "Sign is produced near the eye", 616),
    v("CheekNose", "Sign is produced on the cheek or nose", 511),
    v("UpperLip", "Sign is produced on the upper lip", 53),
    v("Mouth", "Sign is produced on the mouth", 431),
    v("Chin", "Sign is produced on the chin", 717),
    v("UnderChin", "Sign is produced under the chin", 74),
    v("UpperArm", "Sign is produced on the upper arm", 39),
    v("ElbowFront", "Sign is produced in the crook of the elbow", 0),
    v("ElbowBack", "Sign is produced on the outside of the elbow", 13),
    v("ForearmBack", "Sign is produced on the outside of the forearm", 32),
    v("ForearmFront", "Sign is produced on the inside of the forearm", 10),
    v("ForearmUlnar", "Sign is produced on the ulnar side of the forearm", 56),
    v("WristBack", "Sign is produced on the back of the wrist", 23),
    v("WristFront", "Sign is produced on the front of the wrist", 0),
    v("Neck", "Sign is produced on the neck", 68),
    v("Shoulder", "Sign is produced on the shoulder", 101),
    v("Clavicle", "Sign is produced on the clavicle", 419),
    v("TorsoTop", "Sign is produced in the upper third of the torso", 0),
    v("TorsoMid", "Sign is produced in the middle third of the torso", 0),
    v("TorsoBottom", "Sign is produced in the bottom third of the torso", 19),
    v("Waist", "Sign is produced at the waist", 34),
    v("Hips", "Sign is produced on the hips", 59),
    v("Palm", "Sign is produced on the palm of the non-dominant hand", 925),
    v("FingerFront", "Sign is produced on the front of the fingers of the non-dominant hand", 99),
    v("PalmBack", "Sign is produced on the back of the palm of the non-dominant hand", 218),
    v("FingerBack", "Sign is produced on the back of the fingers of the non-dominant hand", 186),
    v("FingerRadial", "Sign is produced on the radial side of the non-dominant hand", 410),
    v("FingerUlnar", "Sign is produced on the ulnar side of the non-dominant hand", 40),
    v("FingerTip", "Sign is produced on the tip of the fingers of the non-dominant hand", 158),
    v("Heel", "Sign is produced on the heel of the non-dominant hand", 88),
    v("Other", "Sign is produced in an unspecified location on the body", 707),
    v("Neutral", "Sign is not produced on or near the body", 3390),
];

const MOVEMENT: &[Row] = &[
    v("Straight", "Straight movement of the dominant hand through xyz space", 1938),
    v(
        "Curved",
        "Single arc movement of the dominant hand through xyz space; hands may or may not make contact with multiple locations",
        1255,
    ),
    v("BackAndForth", "Sequence of more than one straight or curved movements", 3549),
    v(
        "Circular",
        "Circular movement of the dominant hand through space; rotation alone does not constitute a circular movement",
        1129,
    ),
    v("None", "Entire sign (or first free morpheme) does not have a path movement", 1748),
    v("Other", "Sign has another unspecified path movement", 398),
];

const SELECTED_FINGERS: &[Row] = &[
    v("imrp", "index, middle, ring, pinky finger", 4824),
    v("imr", "index, middle, ring finger", 95),
    v("mrp", "middle, ring, pinky finger", 28),
    v("im", "index, middle finger", 1296),
    v("ip", "index, pinky finger", 51),
    v("mr", "middle, ring finger", 0),
    v("mp", "middle, pinky finger", 0),
    v("rp", "ring, pinky finger", 0),
    v("i", "index finger", 2547),
    v("m", "middle finger", 259),
    v("r", "ring finger", 0),
    v("p", "pinky", 407),
    v("thumb", "thumb", 510),
];

const SIGN_TYPE: &[Row] = &[
    v("One Handed", "Sign only recruits one hand", 3939),
    v(
        "Symmetrical Or Alternating",
        "Sign recruits both hands; phonological specifications for both hands are identical; movement of both hands is either symmetrical or alternating",
        3358,
    ),
    v(
        "Asymmetrical Same Handshape",
        "Sign recruits both hands; only the dominant hand moves; the location and orientation of the hands may differ, but the other specifications of handshape are the same; non-dominant hand must be an unmarked handshape (B A S 1 C O 5)",
        938,
    ),
    v(
        "Asymmetrical Different Handshape",
        "Sign recruits both hands; only the dominant hand moves; the location and orientation of the hands may differ, and the other specifications of handshape are not the same; non-dominant hand must be an unmarked handshape (B A S 1 C O 5)",
        1639,
    ),
    v("Other", "Sign violates Battison's Symmetry and Dominance Conditions", 143),
];

impl Taxonomy {
    /// The embedded ASL-Lex inventory with WLASL-Lex cardinalities.
    pub fn builtin() -> Taxonomy {
        let table = |kind: PropertyKind, rows: &[Row]| -> Vec<PropertyValue> {
            rows.iter()
                .map(|&(code, definition, cardinality)| PropertyValue {
                    kind,
                    code: code.to_string(),
                    definition: definition.to_string(),
                    cardinality,
                })
                .collect()
        };
        Taxonomy {
            values: [
                table(PropertyKind::Flexion, FLEXION),
                table(PropertyKind::MajorLocation, MAJOR_LOCATION),
                table(PropertyKind::MinorLocation, MINOR_LOCATION),
                table(PropertyKind::Movement, MOVEMENT),
                table(PropertyKind::SelectedFingers, SELECTED_FINGERS),
                table(PropertyKind::SignType, SIGN_TYPE),
            ],
        }
    }

    /// Builds a taxonomy from explicit per-kind value lists.
    pub fn from_values(values: [Vec<PropertyValue>; 6]) -> Result<Taxonomy, PhonologyError> {
        for (kind, list) in PropertyKind::ALL.into_iter().zip(values.iter()) {
            let mut seen = std::collections::HashSet::new();
            for value in list {
                if !seen.insert(value.code.as_str()) {
                    return Err(PhonologyError::DuplicateValue {
                        kind,
                        code: value.code.clone(),
                    });
                }
            }
        }
        Ok(Taxonomy { values })
    }

    pub fn values(&self, kind: PropertyKind) -> &[PropertyValue] {
        &self.values[kind.index()]
    }

    /// Values with at least one video in the corpus.
    pub fn supported_values(&self, kind: PropertyKind) -> impl Iterator<Item = &PropertyValue> {
        self.values(kind).iter().filter(|v| v.cardinality > 0)
    }

    /// Position of `code` in table order; surrounding whitespace is ignored.
    pub fn position(&self, kind: PropertyKind, code: &str) -> Option<usize> {
        let code = code.trim();
        self.values(kind).iter().position(|v| v.code == code)
    }

    pub fn lookup(&self, kind: PropertyKind, code: &str) -> Result<&PropertyValue, PhonologyError> {
        self.position(kind, code)
            .map(|i| &self.values(kind)[i])
            .ok_or_else(|| PhonologyError::UnknownValue {
                kind,
                code: code.trim().to_string(),
            })
    }

    pub fn total_cardinality(&self, kind: PropertyKind) -> u64 {
        self.values(kind).iter().map(|v| v.cardinality).sum()
    }

    /// Expands the corpus cardinalities of every property into one label per
    /// video. Each label pairs the i-th video's value for every property, so
    /// the marginals match the tables; the joint distribution is synthetic.
    /// Columns are truncated to the shortest property total.
    pub fn expand_cardinalities(&self) -> Vec<PhonologicalLabel> {
        let columns: Vec<Vec<&str>> = PropertyKind::ALL
            .iter()
            .map(|&kind| {
                self.values(kind)
                    .iter()
                    .flat_map(|v| std::iter::repeat_n(v.code.as_str(), v.cardinality as usize))
                    .collect()
            })
            .collect();
        let n = columns.iter().map(Vec::len).min().unwrap_or(0);
        (0..n)
            .map(|i| PhonologicalLabel::new(std::array::from_fn::<&str, 6, _>(|k| columns[k][i])))
            .collect()
    }

    /// Serializes as `{kind: [[code, definition, cardinality], ...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<&str, Vec<(String, String, u64)>> = PropertyKind::ALL
            .iter()
            .map(|&kind| {
                let rows = self
                    .values(kind)
                    .iter()
                    .map(|v| (v.code.clone(), v.definition.clone(), v.cardinality))
                    .collect();
                (kind.as_str(), rows)
            })
            .collect();
        serde_json::to_value(map).expect("taxonomy serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Taxonomy, PhonologyError> {
        let map: BTreeMap<String, Vec<(String, String, u64)>> =
            serde_json::from_value(value.clone()).map_err(|e| PhonologyError::Json(e.to_string()))?;
        let mut values: [Vec<PropertyValue>; 6] = Default::default();
        let mut present = [false; 6];
        for (key, rows) in map {
            let kind: PropertyKind = key.parse()?;
            present[kind.index()] = true;
            values[kind.index()] = rows
                .into_iter()
                .map(|(code, definition, cardinality)| PropertyValue {
                    kind,
                    code: code.trim().to_string(),
                    definition,
                    cardinality,
                })
                .collect();
        }
        if let Some(kind) = PropertyKind::ALL.into_iter().find(|k| !present[k.index()]) {
            return Err(PhonologyError::MissingKind(kind));
        }
        Taxonomy::from_values(values)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()).expect("taxonomy serializes");
        std::fs::write(path, text + "\n")
    }

    pub fn load(path: &Path) -> Result<Taxonomy, PhonologyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PhonologyError::Json(e.to_string()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| PhonologyError::Json(e.to_string()))?;
        Taxonomy::from_json(&value)
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy::builtin()
    }
}

/// Accepts the label iff every component is a known code for its property.
pub fn validate_label(label: &PhonologicalLabel, taxonomy: &Taxonomy) -> Result<(), PhonologyError> {
    for kind in PropertyKind::ALL {
        taxonomy.lookup(kind, label.get(kind))?;
    }
    Ok(())
}

/// Most frequent code for `kind`; ties go to the value listed first in the
/// taxonomy. Codes missing from the taxonomy rank after all known codes.
pub fn majority_value<'a>(
    kind: PropertyKind,
    labels: impl IntoIterator<Item = &'a PhonologicalLabel>,
    taxonomy: &Taxonomy,
) -> Result<String, PhonologyError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for label in labels {
        *counts.entry(label.get(kind)).or_default() += 1;
    }
    let rank = |code: &str| taxonomy.position(kind, code).unwrap_or(usize::MAX);
    counts
        .into_iter()
        .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| rank(b).cmp(&rank(a))))
        .map(|(code, _)| code.to_string())
        .ok_or(PhonologyError::EmptyDataset)
}
