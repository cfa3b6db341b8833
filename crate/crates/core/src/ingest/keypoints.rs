//! Per-video keypoint files.
//!
//! ```json
//! {
//!   "video_id": "00412",
//!   "tracker": "pose2d",
//!   "joint_names": ["nose", "left_eye", ...],
//!   "frames": [[[x, y, score], ...], ...]
//! }
//! ```
//!
//! Producers written in Python emit bare `NaN` / `Infinity` tokens for
//! failed detections. Those are accepted by the reader only so that they can
//! be reported as [`IngestError::NonFiniteValue`] with their position.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::skeleton::{SkeletonSequence, CHANNELS};
use super::{IngestError, TrackerKind};

#[derive(Debug, Serialize, Deserialize)]
pub struct KeypointFile {
    pub video_id: String,
    pub tracker: TrackerKind,
    pub joint_names: Vec<String>,
    pub frames: Vec<Vec<Vec<Option<f64>>>>,
}

impl KeypointFile {
    pub fn from_sequence(video_id: &str, seq: &SkeletonSequence) -> KeypointFile {
        KeypointFile {
            video_id: video_id.to_string(),
            tracker: seq.tracker(),
            joint_names: seq.joint_names().to_vec(),
            frames: (0..seq.frames())
                .map(|t| {
                    seq.frame(t)
                        .chunks_exact(CHANNELS)
                        .map(|c| c.iter().map(|&v| Some(v)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn into_sequence(self, tracker: TrackerKind) -> Result<SkeletonSequence, IngestError> {
        if self.tracker != tracker {
            return Err(IngestError::Format(format!(
                "tracker is {}, expected {}",
                self.tracker, tracker
            )));
        }
        if self.frames.is_empty() {
            return Err(IngestError::EmptySequence);
        }
        let joints = self.joint_names.len();
        let mut data = Vec::with_capacity(self.frames.len() * joints * CHANNELS);
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.len() != joints {
                return Err(IngestError::Format(format!(
                    "frame {t} has {} joints, header names {joints}",
                    frame.len()
                )));
            }
            for (j, joint) in frame.iter().enumerate() {
                if joint.len() != CHANNELS {
                    return Err(IngestError::Format(format!(
                        "frame {t} joint {j} has {} channels, expected {CHANNELS}",
                        joint.len()
                    )));
                }
                for value in joint {
                    match value {
                        Some(v) if v.is_finite() => data.push(*v),
                        _ => return Err(IngestError::NonFiniteValue { frame: t, joint: j }),
                    }
                }
            }
        }
        let seq = SkeletonSequence::new(self.frames.len(), self.joint_names, tracker, data)?;
        let outside = seq.score_range_violations();
        if outside > 0 {
            log::warn!("{}: {outside} confidence scores outside [0, 1]", self.video_id);
        }
        Ok(seq)
    }
}

/// Replaces bare `NaN`, `Infinity` and `-Infinity` tokens outside of string
/// literals with `null`.
fn sanitize_non_standard_numbers(text: &str) -> std::borrow::Cow<'_, str> {
    if !text.contains("NaN") && !text.contains("Infinity") {
        return std::borrow::Cow::Borrowed(text);
    }
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = text;
    while let Some(ch) = rest.chars().next() {
        if in_string {
            out.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            rest = &rest[ch.len_utf8()..];
            continue;
        }
        if ch == '"' {
            in_string = true;
        }
        let token = ["-Infinity", "Infinity", "-NaN", "NaN"]
            .into_iter()
            .find(|tok| rest.starts_with(tok));
        match token {
            Some(tok) => {
                out.push_str("null");
                rest = &rest[tok.len()..];
            }
            None => {
                out.push(ch);
                rest = &rest[ch.len_utf8()..];
            }
        }
    }
    std::borrow::Cow::Owned(out)
}

pub fn parse_keypoints(text: &str, tracker: TrackerKind) -> Result<SkeletonSequence, IngestError> {
    let text = sanitize_non_standard_numbers(text);
    let file: KeypointFile =
        serde_json::from_str(&text).map_err(|e| IngestError::Format(e.to_string()))?;
    file.into_sequence(tracker)
}

/// Reads one keypoint file.
pub fn load_keypoints(path: &Path, tracker: TrackerKind) -> Result<SkeletonSequence, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_keypoints(&text, tracker)
}

pub fn write_keypoints(path: &Path, video_id: &str, seq: &SkeletonSequence) -> Result<(), IngestError> {
    let file = KeypointFile::from_sequence(video_id, seq);
    let text = serde_json::to_string(&file).map_err(|e| IngestError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
