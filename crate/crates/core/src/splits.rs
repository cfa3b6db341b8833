//! Stratified 70:15:15 train/validation/test splits.
//!
//! Two modes are supported. `Phoneme` allocates individual videos, so the
//! same gloss may occur in several splits. `Gloss` allocates whole glosses,
//! which keeps every test gloss unseen during training.
//!
//! Allocation per class: sort members by id, shuffle with a
//! [`SplitMix64`] stream keyed by `(seed, mode, class)`, assign quotas by
//! largest remainder in split order train, val, test, then move single
//! items from the largest split into any empty one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::SignRecord;
use crate::phonology::{PhonologicalLabel, PropertyKind};
use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("class {class:?} has {count} units; at least 3 are needed to populate every split")]
    TooFewSamples { class: String, count: usize },
    #[error("gloss {gloss:?} carries more than one label")]
    InconsistentGlossLabel { gloss: String },
    #[error("ratios {0:?} must be non-negative and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("spec mode is {found}, expected {expected}")]
    WrongMode { expected: SplitMode, found: SplitMode },
    #[error("unknown split mode {0:?}")]
    UnknownMode(String),
    #[error("empty dataset")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Phoneme,
    Gloss,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::Phoneme => "phoneme",
            SplitMode::Gloss => "gloss",
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitMode {
    type Err = SplitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phoneme" => Ok(SplitMode::Phoneme),
            "gloss" => Ok(SplitMode::Gloss),
            _ => Err(SplitError::UnknownMode(s.into())),
        }
    }
}

/// Index into the three splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        })
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub property: PropertyKind,
    pub mode: SplitMode,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(property: PropertyKind, mode: SplitMode, seed: u64) -> SplitSpec {
        SplitSpec {
            property,
            mode,
            ratios: DEFAULT_RATIOS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        let sum: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(SplitError::InvalidRatios(self.ratios));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub dataset_hash: String,
}

impl SplitManifest {
    pub fn ids(&self, part: Partition) -> &[String] {
        match part {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    pub fn partition_of(&self) -> HashMap<&str, Partition> {
        let mut out = HashMap::new();
        for part in Partition::ALL {
            for id in self.ids(part) {
                out.insert(id.as_str(), part);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

/// The metadata a split needs from a record.
pub trait Labeled {
    fn video_id(&self) -> &str;
    fn gloss(&self) -> &str;
    fn label(&self) -> &PhonologicalLabel;
}

impl Labeled for SignRecord {
    fn video_id(&self) -> &str {
        &self.video_id
    }
    fn gloss(&self) -> &str {
        &self.gloss
    }
    fn label(&self) -> &PhonologicalLabel {
        &self.label
    }
}

/// Record metadata without a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub video_id: String,
    pub gloss: String,
    pub label: PhonologicalLabel,
}

impl Labeled for RecordMeta {
    fn video_id(&self) -> &str {
        &self.video_id
    }
    fn gloss(&self) -> &str {
        &self.gloss
    }
    fn label(&self) -> &PhonologicalLabel {
        &self.label
    }
}

/// SHA-256 of the sorted `(video_id, gloss, label)` triples.
pub fn metadata_hash<R: Labeled>(records: &[R]) -> String {
    let mut rows: Vec<(&str, &str, &PhonologicalLabel)> =
        records.iter().map(|r| (r.video_id(), r.gloss(), r.label())).collect();
    rows.sort();
    let mut h = Sha256::new();
    for (id, gloss, label) in rows {
        for part in std::iter::once(id).chain(std::iter::once(gloss)).chain(label.codes().iter().map(String::as_str)) {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn quota(ratio: f64, n: usize) -> f64 {
    let q = ratio * n as f64;
    // 0.7 * 70 lands a hair below 49 in binary floating point.
    if (q - q.round()).abs() < 1e-9 {
        q.round()
    } else {
        q
    }
}

/// Per-split counts for a class of `n` units: largest remainder with ties
/// to the earlier split, then at least one unit per split when `n >= 3`.
pub fn allocate(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| quota(r, n));
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = (0..3).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
        if counts[donor] < 2 {
            break;
        }
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    counts
}

/// Maximum allowed `|count - ratio * n|` for a class of `n` units: one item,
/// plus one for every split the minimum-one rule may have to fill.
pub fn deviation_tolerance(n: usize, ratios: [f64; 3]) -> f64 {
    1.0 + ratios.iter().filter(|&&r| quota(r, n) < 1.0).count() as f64
}

fn assign_class<'a>(
    units: &mut Vec<&'a str>,
    class: &str,
    spec: &SplitSpec,
) -> Result<[Vec<&'a str>; 3], SplitError> {
    if units.len() < 3 {
        return Err(SplitError::TooFewSamples {
            class: class.to_string(),
            count: units.len(),
        });
    }
    units.sort_unstable();
    let key = format!("{}/{}", spec.mode, class);
    SplitMix64::keyed(spec.seed, key.as_bytes()).shuffle(units);
    let counts = allocate(units.len(), spec.ratios);
    let mut rest = units.as_slice();
    let mut out: [Vec<&str>; 3] = Default::default();
    for (slot, count) in out.iter_mut().zip(counts) {
        let (head, tail) = rest.split_at(count);
        slot.extend_from_slice(head);
        rest = tail;
    }
    Ok(out)
}

fn finish(spec: &SplitSpec, mut parts: [Vec<String>; 3], hash: String) -> SplitManifest {
    for p in parts.iter_mut() {
        p.sort();
    }
    let [train, val, test] = parts;
    SplitManifest {
        spec: spec.clone(),
        train,
        val,
        test,
        dataset_hash: hash,
    }
}

fn check(spec: &SplitSpec, expected: SplitMode, empty: bool) -> Result<(), SplitError> {
    spec.validate()?;
    if spec.mode != expected {
        return Err(SplitError::WrongMode {
            expected,
            found: spec.mode,
        });
    }
    if empty {
        return Err(SplitError::Empty);
    }
    Ok(())
}

/// Video-level split stratified on `spec.property`.
pub fn split_phoneme<R: Labeled>(records: &[R], spec: &SplitSpec) -> Result<SplitManifest, SplitError> {
    check(spec, SplitMode::Phoneme, records.is_empty())?;
    let mut classes: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in records {
        classes.entry(r.label().get(spec.property)).or_default().push(r.video_id());
    }
    let mut parts: [Vec<String>; 3] = Default::default();
    for (class, mut ids) in classes {
        let assigned = assign_class(&mut ids, class, spec)?;
        for (slot, ids) in parts.iter_mut().zip(assigned) {
            slot.extend(ids.into_iter().map(String::from));
        }
    }
    Ok(finish(spec, parts, metadata_hash(records)))
}

/// Gloss of each class value, rejecting glosses with conflicting labels.
fn gloss_classes<R: Labeled>(records: &[R], kind: PropertyKind) -> Result<BTreeMap<&str, &str>, SplitError> {
    let mut gloss_class: BTreeMap<&str, &str> = BTreeMap::new();
    for r in records {
        let class = r.label().get(kind);
        match gloss_class.insert(r.gloss(), class) {
            Some(prev) if prev != class => {
                return Err(SplitError::InconsistentGlossLabel {
                    gloss: r.gloss().to_string(),
                })
            }
            _ => {}
        }
    }
    Ok(gloss_class)
}

/// Gloss-disjoint split, stratified over glosses.
pub fn split_gloss<R: Labeled>(records: &[R], spec: &SplitSpec) -> Result<SplitManifest, SplitError> {
    check(spec, SplitMode::Gloss, records.is_empty())?;
    let gloss_class = gloss_classes(records, spec.property)?;
    let mut classes: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (gloss, class) in &gloss_class {
        classes.entry(class).or_default().push(gloss);
    }
    let mut gloss_part: HashMap<&str, usize> = HashMap::new();
    for (class, mut glosses) in classes {
        let assigned = assign_class(&mut glosses, class, spec)?;
        for (i, glosses) in assigned.into_iter().enumerate() {
            for g in glosses {
                gloss_part.insert(g, i);
            }
        }
    }
    let mut parts: [Vec<String>; 3] = Default::default();
    for r in records {
        parts[gloss_part[r.gloss()]].push(r.video_id().to_string());
    }
    Ok(finish(spec, parts, metadata_hash(records)))
}

/// Dispatches on `spec.mode`.
pub fn split<R: Labeled>(records: &[R], spec: &SplitSpec) -> Result<SplitManifest, SplitError> {
    match spec.mode {
        SplitMode::Phoneme => split_phoneme(records, spec),
        SplitMode::Gloss => split_gloss(records, spec),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownId { id: String },
    Disjointness { id: String, partitions: Vec<Partition> },
    Coverage { id: String },
    MissingClass { class: String, partition: Partition },
    RatioDeviation { class: String, partition: Partition, count: usize, expected: f64 },
    GlossLeak { gloss: String, partitions: Vec<Partition> },
    InconsistentGlossLabel { gloss: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitReport {
    pub violations: Vec<Violation>,
    /// Units per class and split (videos, or glosses in gloss mode).
    pub class_counts: BTreeMap<String, [usize; 3]>,
}

impl SplitReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits a manifest against the records it was built from.
pub fn verify_split<R: Labeled>(manifest: &SplitManifest, records: &[R]) -> SplitReport {
    let spec = &manifest.spec;
    let mut violations = Vec::new();
    let by_id: HashMap<&str, &R> = records.iter().map(|r| (r.video_id(), r)).collect();

    let mut seen: BTreeMap<&str, Vec<Partition>> = BTreeMap::new();
    for part in Partition::ALL {
        for id in manifest.ids(part) {
            if !by_id.contains_key(id.as_str()) {
                violations.push(Violation::UnknownId { id: id.clone() });
            }
            seen.entry(id.as_str()).or_default().push(part);
        }
    }
    for (id, parts) in &seen {
        if parts.len() > 1 {
            violations.push(Violation::Disjointness {
                id: id.to_string(),
                partitions: parts.clone(),
            });
        }
    }
    let mut sorted_ids: Vec<&str> = by_id.keys().copied().collect();
    sorted_ids.sort_unstable();
    for id in sorted_ids {
        if !seen.contains_key(id) {
            violations.push(Violation::Coverage { id: id.to_string() });
        }
    }

    // Units: videos in phoneme mode, glosses in gloss mode.
    let mut units: BTreeMap<String, (String, BTreeSet<Partition>)> = BTreeMap::new();
    let mut class_presence: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for (id, parts) in &seen {
        let Some(record) = by_id.get(id) else { continue };
        let class = record.label().get(spec.property).to_string();
        let unit = match spec.mode {
            SplitMode::Phoneme => record.video_id().to_string(),
            SplitMode::Gloss => record.gloss().to_string(),
        };
        let entry = units.entry(unit).or_insert_with(|| (class.clone(), BTreeSet::new()));
        if entry.0 != class {
            violations.push(Violation::InconsistentGlossLabel {
                gloss: record.gloss().to_string(),
            });
        }
        entry.1.extend(parts.iter().copied());
        let presence = class_presence.entry(class).or_default();
        for p in parts {
            presence[*p as usize] += 1;
        }
    }
    for (class, presence) in &class_presence {
        for part in Partition::ALL {
            if presence[part as usize] == 0 {
                violations.push(Violation::MissingClass {
                    class: class.clone(),
                    partition: part,
                });
            }
        }
    }

    let mut class_counts: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for (unit, (class, parts)) in &units {
        if spec.mode == SplitMode::Gloss && parts.len() > 1 {
            violations.push(Violation::GlossLeak {
                gloss: unit.clone(),
                partitions: parts.iter().copied().collect(),
            });
        }
        let counts = class_counts.entry(class.clone()).or_default();
        for p in parts {
            counts[*p as usize] += 1;
        }
    }
    for (class, counts) in &class_counts {
        let n: usize = units.values().filter(|(c, _)| c == class).count();
        let tol = deviation_tolerance(n, spec.ratios);
        for part in Partition::ALL {
            let expected = spec.ratios[part as usize] * n as f64;
            let count = counts[part as usize];
            if (count as f64 - expected).abs() > tol + 1e-9 {
                violations.push(Violation::RatioDeviation {
                    class: class.clone(),
                    partition: part,
                    count,
                    expected,
                });
            }
        }
    }

    SplitReport {
        violations,
        class_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(id: &str, gloss: &str, class: &str) -> RecordMeta {
        RecordMeta {
            video_id: id.into(),
            gloss: gloss.into(),
            label: PhonologicalLabel::new(["1", "Head", "Eye", "None", "i", class]),
        }
    }

    fn spec(mode: SplitMode, seed: u64) -> SplitSpec {
        SplitSpec::new(PropertyKind::SignType, mode, seed)
    }

    /// Brute force: try every (train, val) count pair, keep the ones with
    /// minimal total deviation; ties resolved by the remainder ordering.
    fn brute_largest_remainder(n: usize, ratios: [f64; 3]) -> Vec<[usize; 3]> {
        let mut best = Vec::new();
        let mut best_dev = f64::INFINITY;
        for a in 0..=n {
            for b in 0..=n - a {
                let c = [a, b, n - a - b];
                let dev: f64 = (0..3).map(|i| (c[i] as f64 - ratios[i] * n as f64).abs()).sum();
                if dev < best_dev - 1e-9 {
                    best_dev = dev;
                    best = vec![c];
                } else if (dev - best_dev).abs() <= 1e-9 {
                    best.push(c);
                }
            }
        }
        best
    }

    #[test]
    fn allocation_matches_brute_force_optimum() {
        for n in 7..200 {
            let got = allocate(n, DEFAULT_RATIOS);
            let optima = brute_largest_remainder(n, DEFAULT_RATIOS);
            assert!(optima.contains(&got), "n={n}: {got:?} not in {optima:?}");
        }
        assert_eq!(allocate(70, DEFAULT_RATIOS), [49, 11, 10]);
        assert_eq!(allocate(30, DEFAULT_RATIOS), [21, 5, 4]);
    }

    #[test]
    fn allocation_small_classes() {
        assert_eq!(allocate(3, DEFAULT_RATIOS), [1, 1, 1]);
        assert_eq!(allocate(4, DEFAULT_RATIOS), [2, 1, 1]);
        for n in 3..7 {
            let c = allocate(n, DEFAULT_RATIOS);
            assert!(c.iter().all(|&x| x >= 1));
            assert_eq!(c.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn phoneme_seventy_thirty() {
        let mut recs = Vec::new();
        for i in 0..70 {
            recs.push(meta(&format!("a{i:02}"), &format!("ga{}", i % 7), "One Handed"));
        }
        for i in 0..30 {
            recs.push(meta(&format!("b{i:02}"), &format!("gb{}", i % 5), "Other"));
        }
        let m = split_phoneme(&recs, &spec(SplitMode::Phoneme, 7)).unwrap();
        let report = verify_split(&m, &recs);
        assert!(report.is_valid(), "{:?}", report.violations);
        assert_eq!(report.class_counts["One Handed"], [49, 11, 10]);
        assert_eq!(report.class_counts["Other"], [21, 5, 4]);
        assert_eq!(m.train.len(), 70);
    }

    #[test]
    fn three_records_one_each_two_rejected() {
        let recs: Vec<_> = (0..3).map(|i| meta(&format!("v{i}"), "g", "Other")).collect();
        let m = split_phoneme(&recs, &spec(SplitMode::Phoneme, 1)).unwrap();
        assert_eq!((m.train.len(), m.val.len(), m.test.len()), (1, 1, 1));
        assert!(verify_split(&m, &recs).is_valid());
        assert_eq!(
            split_phoneme(&recs[..2], &spec(SplitMode::Phoneme, 1)),
            Err(SplitError::TooFewSamples {
                class: "Other".into(),
                count: 2
            })
        );
    }

    #[test]
    fn gloss_example_is_leak_free() {
        let recs = vec![
            meta("v1", "g1", "One Handed"),
            meta("v2", "g1", "One Handed"),
            meta("v3", "g2", "One Handed"),
            meta("v4", "g3", "One Handed"),
            meta("v5", "g4", "Other"),
            meta("v6", "g5", "Other"),
            meta("v7", "g6", "Other"),
        ];
        for seed in 0..20 {
            let m = split_gloss(&recs, &spec(SplitMode::Gloss, seed)).unwrap();
            let report = verify_split(&m, &recs);
            assert!(report.is_valid(), "{:?}", report.violations);
            let part = m.partition_of();
            assert_eq!(part["v1"], part["v2"]);
            assert_eq!(report.class_counts["One Handed"], [1, 1, 1]);
        }
    }

    #[test]
    fn gloss_inconsistent_and_too_few() {
        let recs = vec![meta("v1", "g1", "One Handed"), meta("v2", "g1", "Other")];
        assert_eq!(
            split_gloss(&recs, &spec(SplitMode::Gloss, 0)),
            Err(SplitError::InconsistentGlossLabel { gloss: "g1".into() })
        );
        let recs: Vec<_> = (0..5).map(|i| meta(&format!("v{i}"), "only", "Other")).collect();
        assert_eq!(
            split_gloss(&recs, &spec(SplitMode::Gloss, 0)),
            Err(SplitError::TooFewSamples {
                class: "Other".into(),
                count: 1
            })
        );
    }

    #[test]
    fn verify_detects_overlap_and_leak() {
        let recs: Vec<_> = (0..9).map(|i| meta(&format!("v{i}"), &format!("g{}", i / 3), "Other")).collect();
        let mut m = split_phoneme(&recs, &spec(SplitMode::Phoneme, 3)).unwrap();
        let moved = m.train[0].clone();
        m.test.push(moved.clone());
        let report = verify_split(&m, &recs);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Disjointness { id, .. } if *id == moved)));

        let mut g = split_gloss(&recs, &spec(SplitMode::Gloss, 3)).unwrap();
        let id = g.train.pop().unwrap();
        g.test.push(id);
        let report = verify_split(&g, &recs);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::GlossLeak { .. })));
    }

    #[test]
    fn verify_reports_coverage_and_unknown() {
        let recs: Vec<_> = (0..6).map(|i| meta(&format!("v{i}"), "g", "Other")).collect();
        let mut m = split_phoneme(&recs, &spec(SplitMode::Phoneme, 3)).unwrap();
        m.train.pop();
        m.val.push("ghost".into());
        let v = verify_split(&m, &recs).violations;
        assert!(v.iter().any(|v| matches!(v, Violation::Coverage { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::UnknownId { id } if id == "ghost")));
    }

    #[test]
    fn invalid_ratios_and_mode() {
        let recs: Vec<_> = (0..6).map(|i| meta(&format!("v{i}"), "g", "Other")).collect();
        let mut s = spec(SplitMode::Phoneme, 0);
        s.ratios = [0.7, 0.2, 0.2];
        assert!(matches!(split_phoneme(&recs, &s), Err(SplitError::InvalidRatios(_))));
        assert!(matches!(
            split_gloss(&recs, &spec(SplitMode::Phoneme, 0)),
            Err(SplitError::WrongMode { .. })
        ));
    }

    #[test]
    fn order_independent_and_seed_sensitive() {
        let recs: Vec<_> = (0..40)
            .map(|i| meta(&format!("v{i:02}"), &format!("g{}", i % 13), if i % 3 == 0 { "Other" } else { "One Handed" }))
            .collect();
        let mut rev = recs.clone();
        rev.reverse();
        let a = split_phoneme(&recs, &spec(SplitMode::Phoneme, 11)).unwrap();
        let b = split_phoneme(&rev, &spec(SplitMode::Phoneme, 11)).unwrap();
        assert_eq!(a, b);
        let c = split_phoneme(&recs, &spec(SplitMode::Phoneme, 12)).unwrap();
        assert_ne!(a.train, c.train);
    }
}
