use serde::{Deserialize, Serialize};

use super::{IngestError, TrackerKind};

/// Channels per joint for both trackers.
pub const CHANNELS: usize = 3;

/// Default sequence length after normalization.
pub const TARGET_FRAMES: usize = 150;

/// The 27 upper-body joints, in graph order.
pub const UPPER_BODY_JOINTS: [&str; 27] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_thumb_tip",
    "left_index_base_knuckle",
    "left_index_tip_knuckle",
    "left_middle_base_knuckle",
    "left_middle_tip_knuckle",
    "left_ring_base_knuckle",
    "left_ring_tip_knuckle",
    "left_pinky_base_knuckle",
    "left_pinky_tip_knuckle",
    "right_thumb_tip",
    "right_index_base_knuckle",
    "right_index_tip_knuckle",
    "right_middle_base_knuckle",
    "right_middle_tip_knuckle",
    "right_ring_base_knuckle",
    "right_ring_tip_knuckle",
    "right_pinky_base_knuckle",
    "right_pinky_tip_knuckle",
];

/// A `frames × joints × 3` array of joint readings, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSequence {
    frames: usize,
    joint_names: Vec<String>,
    tracker: TrackerKind,
    data: Vec<f64>,
}

impl SkeletonSequence {
    pub fn new(
        frames: usize,
        joint_names: Vec<String>,
        tracker: TrackerKind,
        data: Vec<f64>,
    ) -> Result<SkeletonSequence, IngestError> {
        if frames == 0 {
            return Err(IngestError::EmptySequence);
        }
        let joints = joint_names.len();
        if joints == 0 || data.len() != frames * joints * CHANNELS {
            return Err(IngestError::Shape {
                expected: frames * joints * CHANNELS,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let per_frame = joints * CHANNELS;
            return Err(IngestError::NonFiniteValue {
                frame: pos / per_frame,
                joint: (pos % per_frame) / CHANNELS,
            });
        }
        Ok(SkeletonSequence {
            frames,
            joint_names,
            tracker,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn tracker(&self) -> TrackerKind {
        self.tracker
    }

    /// `(frames, joints, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.joints(), CHANNELS)
    }

    /// Flat row-major values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let width = self.joints() * CHANNELS;
        &self.data[t * width..(t + 1) * width]
    }

    pub fn at(&self, t: usize, joint: usize, channel: usize) -> f64 {
        self.data[(t * self.joints() + joint) * CHANNELS + channel]
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    /// Number of Pose2D confidence scores outside `[0, 1]`.
    pub fn score_range_violations(&self) -> usize {
        if self.tracker != TrackerKind::Pose2D {
            return 0;
        }
        self.data
            .chunks_exact(CHANNELS)
            .filter(|c| !(0.0..=1.0).contains(&c[2]))
            .count()
    }
}

/// Reorders to the 27 canonical upper-body joints.
pub fn select_upper_body(seq: &SkeletonSequence) -> Result<SkeletonSequence, IngestError> {
    let indices = UPPER_BODY_JOINTS
        .iter()
        .map(|name| {
            seq.joint_index(name)
                .ok_or_else(|| IngestError::MissingJoint { name: name.to_string() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut data = Vec::with_capacity(seq.frames * indices.len() * CHANNELS);
    for t in 0..seq.frames {
        let frame = seq.frame(t);
        for &j in &indices {
            data.extend_from_slice(&frame[j * CHANNELS..(j + 1) * CHANNELS]);
        }
    }
    Ok(SkeletonSequence {
        frames: seq.frames,
        joint_names: UPPER_BODY_JOINTS.iter().map(|s| s.to_string()).collect(),
        tracker: seq.tracker,
        data,
    })
}

/// Truncates to `target` frames, or loops the whole sequence from frame 0
/// until `target` frames are filled.
pub fn normalize_length(seq: &SkeletonSequence, target: usize) -> Result<SkeletonSequence, IngestError> {
    if seq.frames == 0 || target == 0 {
        return Err(IngestError::EmptySequence);
    }
    let width = seq.joints() * CHANNELS;
    let mut data = Vec::with_capacity(target * width);
    for t in 0..target {
        data.extend_from_slice(seq.frame(t % seq.frames));
    }
    Ok(SkeletonSequence {
        frames: target,
        joint_names: seq.joint_names.clone(),
        tracker: seq.tracker,
        data,
    })
}

/// Result of [`normalize_coords`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoordNormalization {
    pub sequence: SkeletonSequence,
    /// Frame-0 shoulders coincided; only the translation was applied.
    pub degenerate_scale: bool,
}

/// Shoulder distance below which no scaling is applied.
pub const MIN_SHOULDER_DISTANCE: f64 = 1e-9;

/// Moves the frame-0 shoulder midpoint to the origin and rescales so the
/// frame-0 shoulder distance is 1. Pose2D scores are left untouched.
pub fn normalize_coords(seq: &SkeletonSequence) -> Result<CoordNormalization, IngestError> {
    let left = seq
        .joint_index("left_shoulder")
        .ok_or_else(|| IngestError::MissingJoint { name: "left_shoulder".into() })?;
    let right = seq
        .joint_index("right_shoulder")
        .ok_or_else(|| IngestError::MissingJoint { name: "right_shoulder".into() })?;
    let spatial = seq.tracker.spatial_channels();

    let mut origin = [0.0; CHANNELS];
    let mut dist2 = 0.0;
    for c in 0..spatial {
        let (l, r) = (seq.at(0, left, c), seq.at(0, right, c));
        origin[c] = 0.5 * (l + r);
        dist2 += (l - r) * (l - r);
    }
    let dist = dist2.sqrt();
    let degenerate_scale = dist < MIN_SHOULDER_DISTANCE;
    let scale = if degenerate_scale {
        log::warn!("coincident shoulders in frame 0; skipping scale normalization");
        1.0
    } else {
        dist
    };

    let mut data = seq.data.clone();
    for joint in data.chunks_exact_mut(CHANNELS) {
        for c in 0..spatial {
            joint[c] = (joint[c] - origin[c]) / scale;
        }
    }
    Ok(CoordNormalization {
        sequence: SkeletonSequence {
            data,
            ..seq.clone()
        },
        degenerate_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn ramp(frames: usize, joints: &[&str]) -> SkeletonSequence {
        let n = frames * joints.len() * CHANNELS;
        SkeletonSequence::new(frames, names(joints), TrackerKind::Mocap3D, (0..n).map(|v| v as f64).collect())
            .unwrap()
    }

    /// A whole-body style layout: the 27 joints interleaved with 106 others.
    fn whole_body_names() -> Vec<String> {
        let mut out: Vec<String> = (0..106).map(|i| format!("extra_{i}")).collect();
        for (i, name) in UPPER_BODY_JOINTS.iter().enumerate().rev() {
            out.insert(i * 4 % (out.len() + 1), name.to_string());
        }
        out
    }

    #[test]
    fn upper_body_from_whole_body() {
        let names = whole_body_names();
        assert_eq!(names.len(), 133);
        let n = 2 * names.len() * CHANNELS;
        let seq = SkeletonSequence::new(2, names.clone(), TrackerKind::Pose2D, (0..n).map(|v| v as f64).collect())
            .unwrap();
        let out = select_upper_body(&seq).unwrap();
        assert_eq!(out.shape(), (2, 27, 3));
        for (j, name) in UPPER_BODY_JOINTS.iter().enumerate() {
            let src = names.iter().position(|n| n == name).unwrap();
            for t in 0..2 {
                for c in 0..3 {
                    assert_eq!(out.at(t, j, c), seq.at(t, src, c));
                }
            }
        }
    }

    #[test]
    fn upper_body_identity_on_canonical_input() {
        let seq = ramp(3, &UPPER_BODY_JOINTS);
        assert_eq!(select_upper_body(&seq).unwrap(), seq);
    }

    #[test]
    fn upper_body_missing_joint() {
        let list: Vec<&str> = UPPER_BODY_JOINTS.iter().copied().filter(|n| *n != "left_wrist").collect();
        let err = select_upper_body(&ramp(1, &list)).unwrap_err();
        assert!(matches!(err, IngestError::MissingJoint { name } if name == "left_wrist"));
    }

    #[test]
    fn length_identity_truncate_and_loop() {
        let j = ["a"];
        let s150 = ramp(150, &j);
        assert_eq!(normalize_length(&s150, 150).unwrap(), s150);

        let s300 = ramp(300, &j);
        let cut = normalize_length(&s300, 150).unwrap();
        assert_eq!(cut.data(), &s300.data()[..150 * 3]);

        let s60 = ramp(60, &j);
        let looped = normalize_length(&s60, 150).unwrap();
        let expect: Vec<usize> = (0..60).chain(0..60).chain(0..30).collect();
        for (t, &src) in expect.iter().enumerate() {
            assert_eq!(looped.frame(t), s60.frame(src));
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(matches!(
            SkeletonSequence::new(0, names(&["a"]), TrackerKind::Mocap3D, vec![]),
            Err(IngestError::EmptySequence)
        ));
    }

    #[test]
    fn non_finite_rejected_with_position() {
        let mut data = vec![0.0; 2 * 3 * 3];
        data[3 * 3 + 4] = f64::NAN;
        let err = SkeletonSequence::new(2, names(&["a", "b", "c"]), TrackerKind::Mocap3D, data).unwrap_err();
        assert!(matches!(err, IngestError::NonFiniteValue { frame: 1, joint: 1 }));
    }

    fn shoulders(frames: Vec<[[f64; 3]; 3]>, tracker: TrackerKind) -> SkeletonSequence {
        let t = frames.len();
        let data = frames.into_iter().flatten().flatten().collect();
        SkeletonSequence::new(t, names(&["left_shoulder", "right_shoulder", "nose"]), tracker, data).unwrap()
    }

    #[test]
    fn coords_already_unit() {
        let seq = shoulders(vec![[[-0.5, 0.0, 0.2], [0.5, 0.0, 0.2], [0.0, 1.0, 0.2]]], TrackerKind::Pose2D);
        let out = normalize_coords(&seq).unwrap();
        assert!(!out.degenerate_scale);
        assert_eq!(out.sequence, seq);

        let wide = shoulders(vec![[[-1.0, 0.0, 0.9], [1.0, 0.0, 0.9], [0.0, 2.0, 0.9]]], TrackerKind::Pose2D);
        let out = normalize_coords(&wide).unwrap().sequence;
        assert_eq!(out.frame(0), &[-0.5, 0.0, 0.9, 0.5, 0.0, 0.9, 0.0, 1.0, 0.9]);
    }

    #[test]
    fn coords_degenerate_translation_only() {
        let seq = shoulders(vec![[[2.0, 3.0, 1.0], [2.0, 3.0, 1.0], [4.0, 3.0, 1.0]]], TrackerKind::Mocap3D);
        let out = normalize_coords(&seq).unwrap();
        assert!(out.degenerate_scale);
        assert_eq!(out.sequence.frame(0), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn coords_missing_shoulder() {
        assert!(matches!(
            normalize_coords(&ramp(1, &["nose"])),
            Err(IngestError::MissingJoint { .. })
        ));
    }

    #[test]
    fn score_violations_counted_only_for_pose2d() {
        let seq = shoulders(vec![[[0.0, 0.0, 1.5], [1.0, 0.0, -0.1], [0.0, 1.0, 0.5]]], TrackerKind::Pose2D);
        assert_eq!(seq.score_range_violations(), 2);
        let seq3 = shoulders(vec![[[0.0, 0.0, 1.5], [1.0, 0.0, -0.1], [0.0, 1.0, 0.5]]], TrackerKind::Mocap3D);
        assert_eq!(seq3.score_range_violations(), 0);
    }

    fn arb_sequence() -> impl Strategy<Value = SkeletonSequence> {
        (1usize..40, prop::bool::ANY).prop_flat_map(|(frames, three_d)| {
            let tracker = if three_d { TrackerKind::Mocap3D } else { TrackerKind::Pose2D };
            prop::collection::vec(-10.0f64..10.0, frames * 3 * CHANNELS).prop_map(move |data| {
                shoulders_from_flat(frames, tracker, data)
            })
        })
    }

    fn shoulders_from_flat(frames: usize, tracker: TrackerKind, data: Vec<f64>) -> SkeletonSequence {
        SkeletonSequence::new(frames, names(&["left_shoulder", "right_shoulder", "nose"]), tracker, data).unwrap()
    }

    proptest! {
        #[test]
        fn length_normalization_idempotent(seq in arb_sequence(), target in 1usize..200) {
            let once = normalize_length(&seq, target).unwrap();
            let twice = normalize_length(&once, target).unwrap();
            prop_assert_eq!(once.frames(), target);
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn coord_normalization_similarity_invariant(
            seq in arb_sequence(),
            scale in 0.1f64..20.0,
            shift in prop::array::uniform3(-50.0f64..50.0),
        ) {
            let spatial = seq.tracker().spatial_channels();
            let moved: Vec<f64> = seq
                .data()
                .chunks_exact(CHANNELS)
                .flat_map(|c| {
                    let mut out = [c[0], c[1], c[2]];
                    for k in 0..spatial {
                        out[k] = c[k] * scale + shift[k];
                    }
                    out
                })
                .collect();
            let moved = shoulders_from_flat(seq.frames(), seq.tracker(), moved);
            let a = normalize_coords(&seq).unwrap();
            let b = normalize_coords(&moved).unwrap();
            prop_assume!(!a.degenerate_scale && !b.degenerate_scale);
            for (x, y) in a.sequence.data().iter().zip(b.sequence.data()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn upper_body_selection_idempotent() {
        let names = whole_body_names();
        let n = 4 * names.len() * CHANNELS;
        let seq = SkeletonSequence::new(4, names, TrackerKind::Mocap3D, (0..n).map(|v| (v % 17) as f64).collect())
            .unwrap();
        let once = select_upper_body(&seq).unwrap();
        assert_eq!(select_upper_body(&once).unwrap(), once);
    }
}
