//! Synthetic skeleton data with a known, learnable class structure.
//!
//! Each class displaces the right hand along its own axis direction
//! (±x, ±y, ±z) with a per-sample phase, on top of a fixed rest pose and
//! Gaussian jitter. The classes are separable by position alone, so any of
//! the networks can fit them.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{
    Dataset, IngestError, KeypointFile, SignRecord, SkeletonSequence, TrackerKind, INDEX_HEADER, LEXICON_HEADER, TARGET_FRAMES,
    UPPER_BODY_JOINTS,
};
use crate::phonology::{PhonologicalLabel, PropertyKind, Taxonomy};

/// The property whose values encode the synthetic classes.
pub const SYNTHETIC_PROPERTY: PropertyKind = PropertyKind::Movement;

/// Number of distinguishable synthetic classes.
pub const SYNTHETIC_CLASSES: usize = 6;

const DIRECTIONS: [[f64; 3]; SYNTHETIC_CLASSES] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

/// Upper-body rest pose with the shoulder midpoint at the origin and unit
/// shoulder distance.
pub fn rest_pose() -> Vec<[f64; 3]> {
    let mut pose = Vec::with_capacity(UPPER_BODY_JOINTS.len());
    for name in UPPER_BODY_JOINTS {
        let (side, rest) = match name.split_once('_') {
            Some(("left", r)) => (-1.0, r),
            Some(("right", r)) => (1.0, r),
            _ => (0.0, name),
        };
        let wrist = [0.5 * side, 0.9, 0.1];
        let finger = |i: f64| [wrist[0] + side * (i * 0.04 - 0.06), wrist[1] + 0.1, wrist[2]];
        let p = match rest {
            "nose" => [0.0, -0.5, 0.0],
            "eye" => [0.1 * side, -0.6, 0.0],
            "shoulder" => [0.5 * side, 0.0, 0.0],
            "elbow" => [0.6 * side, 0.5, 0.0],
            "wrist" => wrist,
            "thumb_tip" => [wrist[0] - side * 0.08, wrist[1] + 0.05, wrist[2]],
            other => {
                let (digit, part) = other.split_once('_').expect("finger joint");
                let i = ["index", "middle", "ring", "pinky"].iter().position(|d| *d == digit).expect("finger") as f64;
                let base = finger(i);
                match part {
                    "base_knuckle" => base,
                    _ => [base[0], base[1] + 0.08, base[2]],
                }
            }
        };
        pose.push(p);
    }
    pose
}

fn is_right_hand(name: &str) -> bool {
    name.starts_with("right_") && !name.contains("shoulder") && !name.contains("elbow") && !name.contains("eye")
}

/// Knobs of the generator.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub per_class: usize,
    pub frames: usize,
    /// Standard deviation of the per-coordinate jitter.
    pub noise: f64,
    /// Displacement length of the right hand.
    pub amplitude: f64,
    /// Distinct glosses per class; videos cycle through them.
    pub glosses_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            per_class: 50,
            frames: TARGET_FRAMES,
            noise: 0.05,
            amplitude: 0.6,
            glosses_per_class: 5,
            seed: 0,
        }
    }
}

/// One synthetic sequence of class `class` in canonical joint order.
pub fn synthetic_sequence(class: usize, frames: usize, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> SkeletonSequence {
    let pose = rest_pose();
    let jitter = Normal::new(0.0, spec.noise).expect("valid noise");
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let scale = spec.amplitude * rng.gen_range(0.8..1.2);
    let dir = DIRECTIONS[class % SYNTHETIC_CLASSES];
    let mut data = Vec::with_capacity(frames * pose.len() * 3);
    for t in 0..frames {
        let swing = 0.5 + 0.5 * (std::f64::consts::TAU * 2.0 * t as f64 / frames as f64 + phase).sin();
        for (j, p) in pose.iter().enumerate() {
            let moved = is_right_hand(UPPER_BODY_JOINTS[j]);
            for c in 0..3 {
                let offset = if moved { scale * swing * dir[c] } else { 0.0 };
                data.push(p[c] + offset + jitter.sample(rng));
            }
        }
    }
    let names = UPPER_BODY_JOINTS.iter().map(|s| s.to_string()).collect();
    SkeletonSequence::new(frames, names, TrackerKind::Mocap3D, data).expect("finite synthetic data")
}

/// Label whose synthetic property takes the `class`-th value and whose
/// other properties take their first supported value.
pub fn synthetic_label(class: usize, taxonomy: &Taxonomy) -> PhonologicalLabel {
    let codes: [String; 6] = std::array::from_fn(|k| {
        let kind = PropertyKind::ALL[k];
        let values: Vec<_> = taxonomy.supported_values(kind).collect();
        if kind == SYNTHETIC_PROPERTY {
            values[class % values.len()].code.clone()
        } else {
            values[0].code.clone()
        }
    });
    PhonologicalLabel::new(codes)
}

/// `SYNTHETIC_CLASSES × per_class` labelled sequences.
pub fn separable_dataset(spec: &SyntheticSpec) -> Dataset {
    let taxonomy = Taxonomy::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(SYNTHETIC_CLASSES * spec.per_class);
    for class in 0..SYNTHETIC_CLASSES {
        let label = synthetic_label(class, &taxonomy);
        for i in 0..spec.per_class {
            records.push(SignRecord {
                video_id: format!("syn{class}_{i:04}"),
                gloss: format!("gloss{class}_{}", i % spec.glosses_per_class.max(1)),
                signer_id: format!("s{}", i % 7),
                label: label.clone(),
                sequence: synthetic_sequence(class, spec.frames, spec, &mut rng),
            });
        }
    }
    Dataset {
        tracker: TrackerKind::Mocap3D,
        frames: spec.frames,
        joint_names: UPPER_BODY_JOINTS.iter().map(|s| s.to_string()).collect(),
        records,
    }
}

/// One gloss of a raw corpus.
#[derive(Debug, Clone)]
pub struct RawGloss {
    pub gloss: String,
    /// Synthetic class driving the motion pattern.
    pub class: usize,
    pub label: PhonologicalLabel,
    pub videos: usize,
}

fn io_error(path: &Path, e: impl ToString) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes `lexicon.csv`, `index.csv` and `keypoints/<video_id>.json` under
/// `dir`, in raw (unnormalized) coordinates.
pub fn write_raw_corpus(
    dir: &Path,
    glosses: &[RawGloss],
    frames: usize,
    tracker: TrackerKind,
    seed: u64,
) -> Result<(), IngestError> {
    let keypoints = dir.join("keypoints");
    std::fs::create_dir_all(&keypoints).map_err(|e| io_error(&keypoints, e))?;
    let spec = SyntheticSpec {
        frames,
        seed,
        ..SyntheticSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut lexicon = csv::Writer::from_writer(Vec::new());
    lexicon.write_record(LEXICON_HEADER).map_err(|e| io_error(dir, e))?;
    let mut index = csv::Writer::from_writer(Vec::new());
    index.write_record(INDEX_HEADER).map_err(|e| io_error(dir, e))?;
    let mut video = 0usize;
    for g in glosses {
        let mut row = vec![g.gloss.clone()];
        row.extend(g.label.codes().iter().map(|c| c.to_string()));
        lexicon.write_record(&row).map_err(|e| io_error(dir, e))?;
        for _ in 0..g.videos {
            let video_id = format!("{video:05}");
            video += 1;
            let seq = synthetic_sequence(g.class, frames, &spec, &mut rng);
            // Pixel-like coordinates; a 2D tracker's third channel is a score.
            let mut data: Vec<f64> = seq.data().iter().map(|v| 200.0 * v + 320.0).collect();
            if tracker == TrackerKind::Pose2D {
                for point in data.chunks_exact_mut(3) {
                    point[2] = rng.gen_range(0.6..1.0);
                }
            }
            let raw = SkeletonSequence::new(frames, seq.joint_names().to_vec(), tracker, data)?;
            let rel = format!("keypoints/{video_id}.json");
            let path = dir.join(&rel);
            let file = KeypointFile::from_sequence(&video_id, &raw);
            let text = serde_json::to_string(&file).map_err(|e| io_error(&path, e))?;
            std::fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
            let signer = format!("signer{}", video % 3);
            index
                .write_record([video_id.as_str(), g.gloss.as_str(), signer.as_str(), rel.as_str(), tracker.as_str()])
                .map_err(|e| io_error(dir, e))?;
        }
    }
    for (name, writer) in [("lexicon.csv", lexicon), ("index.csv", index)] {
        let path = dir.join(name);
        let bytes = writer.into_inner().map_err(|e| io_error(&path, e))?;
        let mut f = std::fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        f.write_all(&bytes).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}
