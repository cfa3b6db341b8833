//! Dataset construction: lexicon and video-index parsing, the gloss join,
//! keypoint loading and sequence normalization.

mod keypoints;
mod skeleton;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::phonology::{validate_label, PhonologicalLabel, PhonologyError, PropertyKind, Taxonomy};

pub use keypoints::{load_keypoints, parse_keypoints, write_keypoints, KeypointFile};
pub use skeleton::{
    normalize_coords, normalize_length, select_upper_body, CoordNormalization, SkeletonSequence, CHANNELS,
    MIN_SHOULDER_DISTANCE, TARGET_FRAMES, UPPER_BODY_JOINTS,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate gloss {gloss:?}")]
    DuplicateGloss { line: u64, gloss: String },
    #[error("line {line}: duplicate video id {video_id:?}")]
    DuplicateVideo { line: u64, video_id: String },
    #[error("line {line}: {source}")]
    UnknownValue {
        line: u64,
        #[source]
        source: PhonologyError,
    },
    #[error("keypoint format: {0}")]
    Format(String),
    #[error("non-finite value at frame {frame}, joint {joint}")]
    NonFiniteValue { frame: usize, joint: usize },
    #[error("missing joint {name:?}")]
    MissingJoint { name: String },
    #[error("empty sequence")]
    EmptySequence,
    #[error("expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("video {video_id}: {source}")]
    Video {
        video_id: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error("index mixes trackers {0:?}; choose one")]
    MixedTrackers(Vec<TrackerKind>),
    #[error("unknown tracker {0:?}")]
    UnknownTracker(String),
}

/// Pose tracker that produced a keypoint file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrackerKind {
    /// 3D human-model fitter: channels `x, y, z`.
    #[serde(rename = "mocap3d")]
    Mocap3D,
    /// 2D detector: channels `x, y, score`.
    #[serde(rename = "pose2d")]
    Pose2D,
}

impl TrackerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackerKind::Mocap3D => "mocap3d",
            TrackerKind::Pose2D => "pose2d",
        }
    }

    /// Leading channels holding coordinates; the rest are scores.
    pub fn spatial_channels(self) -> usize {
        match self {
            TrackerKind::Mocap3D => 3,
            TrackerKind::Pose2D => 2,
        }
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackerKind {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mocap3d" => Ok(TrackerKind::Mocap3D),
            "pose2d" => Ok(TrackerKind::Pose2D),
            _ => Err(IngestError::UnknownTracker(s.to_string())),
        }
    }
}

/// Case-folds and trims a gloss.
pub fn normalize_gloss(gloss: &str) -> String {
    gloss.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub gloss: String,
    pub label: PhonologicalLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub gloss: String,
    pub signer_id: String,
    pub keypoint_path: PathBuf,
    pub tracker: TrackerKind,
}

/// One labelled video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignRecord {
    pub video_id: String,
    pub gloss: String,
    pub signer_id: String,
    pub label: PhonologicalLabel,
    pub sequence: SkeletonSequence,
}

pub const LEXICON_HEADER: [&str; 7] = [
    "gloss",
    "flexion",
    "major_location",
    "minor_location",
    "movement",
    "selected_fingers",
    "sign_type",
];

pub const INDEX_HEADER: [&str; 5] = ["video_id", "gloss", "signer_id", "keypoint_path", "tracker"];

fn column_positions(headers: &csv::StringRecord, wanted: &[&str]) -> Result<Vec<usize>, IngestError> {
    wanted
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| IngestError::Parse {
                    line: 1,
                    message: format!("missing column {name:?}"),
                })
        })
        .collect()
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader)
}

fn csv_error(err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    IngestError::Parse {
        line,
        message: err.to_string(),
    }
}

/// Parses the lexicon CSV. Glosses are normalized and must be unique; every
/// label must resolve against `taxonomy`.
pub fn read_lexicon<R: Read>(reader: R, taxonomy: &Taxonomy) -> Result<Vec<LexiconEntry>, IngestError> {
    let mut rdr = csv_reader(reader);
    let cols = column_positions(rdr.headers().map_err(csv_error)?, &LEXICON_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(cols[i]).unwrap_or("");
        let gloss = normalize_gloss(field(0));
        if gloss.is_empty() {
            return Err(IngestError::Parse {
                line,
                message: "empty gloss".into(),
            });
        }
        let label = PhonologicalLabel::new(std::array::from_fn::<&str, 6, _>(|k| field(k + 1)));
        validate_label(&label, taxonomy).map_err(|source| IngestError::UnknownValue { line, source })?;
        if !seen.insert(gloss.clone()) {
            return Err(IngestError::DuplicateGloss { line, gloss });
        }
        out.push(LexiconEntry { gloss, label });
    }
    Ok(out)
}

fn open(path: &Path) -> Result<std::fs::File, IngestError> {
    std::fs::File::open(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn parse_lexicon(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<LexiconEntry>, IngestError> {
    read_lexicon(open(path)?, taxonomy)
}

/// Parses the video index CSV. Video ids must be unique.
pub fn read_video_index<R: Read>(reader: R) -> Result<Vec<VideoRecord>, IngestError> {
    let mut rdr = csv_reader(reader);
    let cols = column_positions(rdr.headers().map_err(csv_error)?, &INDEX_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(cols[i]).unwrap_or("").to_string();
        let video_id = field(0);
        if video_id.is_empty() {
            return Err(IngestError::Parse {
                line,
                message: "empty video_id".into(),
            });
        }
        if !seen.insert(video_id.clone()) {
            return Err(IngestError::DuplicateVideo { line, video_id });
        }
        let tracker = field(4).parse().map_err(|e: IngestError| IngestError::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(VideoRecord {
            video_id,
            gloss: normalize_gloss(&field(1)),
            signer_id: field(2),
            keypoint_path: PathBuf::from(field(3)),
            tracker,
        });
    }
    Ok(out)
}

pub fn parse_video_index(path: &Path) -> Result<Vec<VideoRecord>, IngestError> {
    read_video_index(open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JoinReport {
    pub matched_videos: usize,
    pub matched_glosses: usize,
    pub unmatched_lexicon_glosses: Vec<String>,
    pub unmatched_index_glosses: Vec<String>,
}

/// Inner join of index videos with lexicon labels on normalized gloss.
/// Output keeps index order.
pub fn cross_reference(
    lexicon: &[LexiconEntry],
    index: &[VideoRecord],
) -> (Vec<(VideoRecord, PhonologicalLabel)>, JoinReport) {
    let by_gloss: BTreeMap<String, &PhonologicalLabel> =
        lexicon.iter().map(|e| (normalize_gloss(&e.gloss), &e.label)).collect();
    let mut matched = Vec::new();
    let mut matched_glosses = BTreeSet::new();
    let mut unmatched_index = BTreeSet::new();
    for video in index {
        let gloss = normalize_gloss(&video.gloss);
        match by_gloss.get(&gloss) {
            Some(label) => {
                matched.push((video.clone(), (*label).clone()));
                matched_glosses.insert(gloss);
            }
            None => {
                unmatched_index.insert(gloss);
            }
        }
    }
    let unmatched_lexicon = by_gloss
        .keys()
        .filter(|g| !matched_glosses.contains(*g))
        .cloned()
        .collect();
    let report = JoinReport {
        matched_videos: matched.len(),
        matched_glosses: matched_glosses.len(),
        unmatched_lexicon_glosses: unmatched_lexicon,
        unmatched_index_glosses: unmatched_index.into_iter().collect(),
    };
    (matched, report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Restrict the index to one tracker; required when the index mixes them.
    pub tracker: Option<TrackerKind>,
    pub target_frames: usize,
    pub normalize_coords: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            tracker: None,
            target_frames: TARGET_FRAMES,
            normalize_coords: true,
        }
    }
}

/// A built dataset: one tracker, fixed frame count, canonical joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub tracker: TrackerKind,
    pub frames: usize,
    pub joint_names: Vec<String>,
    pub records: Vec<SignRecord>,
}

impl Dataset {
    pub fn record(&self, video_id: &str) -> Option<&SignRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }

    /// SHA-256 over every record's metadata and sequence bytes, in record order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tracker.as_str().as_bytes());
        h.update((self.frames as u64).to_le_bytes());
        for r in &self.records {
            for part in [&r.video_id, &r.gloss, &r.signer_id] {
                h.update((part.len() as u64).to_le_bytes());
                h.update(part.as_bytes());
            }
            for code in r.label.codes() {
                h.update((code.len() as u64).to_le_bytes());
                h.update(code.as_bytes());
            }
            for v in r.sequence.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let file = std::fs::File::create(path).map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::to_writer(std::io::BufWriter::new(file), self).map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Dataset, IngestError> {
        let file = open(path)?;
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Distinct values of `kind` in the dataset, in taxonomy order.
    pub fn classes(&self, kind: PropertyKind, taxonomy: &Taxonomy) -> Vec<String> {
        let present: BTreeSet<&str> = self.records.iter().map(|r| r.label.get(kind)).collect();
        taxonomy
            .values(kind)
            .iter()
            .filter(|v| present.contains(v.code.as_str()))
            .map(|v| v.code.clone())
            .collect()
    }
}

/// Loads, subsets and normalizes one matched video.
pub fn prepare_sequence(path: &Path, tracker: TrackerKind, options: &BuildOptions) -> Result<SkeletonSequence, IngestError> {
    let raw = load_keypoints(path, tracker)?;
    let upper = select_upper_body(&raw)?;
    let fixed = normalize_length(&upper, options.target_frames)?;
    if options.normalize_coords {
        Ok(normalize_coords(&fixed)?.sequence)
    } else {
        Ok(fixed)
    }
}

/// Joins lexicon and index, then loads every matched keypoint file relative
/// to `keypoint_root`.
pub fn build_dataset(
    lexicon: &[LexiconEntry],
    index: &[VideoRecord],
    keypoint_root: &Path,
    options: &BuildOptions,
) -> Result<(Dataset, JoinReport), IngestError> {
    let tracker = match options.tracker {
        Some(t) => t,
        None => {
            let kinds: BTreeSet<TrackerKind> = index.iter().map(|v| v.tracker).collect();
            match kinds.len() {
                0 => TrackerKind::Pose2D,
                1 => *kinds.iter().next().unwrap(),
                _ => return Err(IngestError::MixedTrackers(kinds.into_iter().collect())),
            }
        }
    };
    let index: Vec<VideoRecord> = index.iter().filter(|v| v.tracker == tracker).cloned().collect();
    let (matched, report) = cross_reference(lexicon, &index);
    let mut records = Vec::with_capacity(matched.len());
    for (video, label) in matched {
        let path = keypoint_root.join(&video.keypoint_path);
        let sequence = prepare_sequence(&path, tracker, options).map_err(|e| IngestError::Video {
            video_id: video.video_id.clone(),
            source: Box::new(e),
        })?;
        records.push(SignRecord {
            video_id: video.video_id,
            gloss: video.gloss,
            signer_id: video.signer_id,
            label,
            sequence,
        });
    }
    Ok((
        Dataset {
            tracker,
            frames: options.target_frames,
            joint_names: UPPER_BODY_JOINTS.iter().map(|s| s.to_string()).collect(),
            records,
        },
        report,
    ))
}
