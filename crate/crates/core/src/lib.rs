//! Phonological property recognition from skeleton sequences.
//!
//! The crate covers the whole experimental pipeline: building a labelled
//! dataset from a phonological lexicon and a video index, stratified
//! splitting, a small reverse-mode autodiff engine with the classifiers
//! built on it, training with validation-MCC model selection, and the
//! evaluation and agreement-analysis metrics.

pub mod autodiff;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod phonology;
pub mod rng;
pub mod splits;
pub mod synthetic;
pub mod train;

pub use models::{Architecture, ModelConfig, TrainedModel};
pub use ingest::{Dataset, SignRecord, SkeletonSequence, TrackerKind};
pub use phonology::{PhonologicalLabel, PropertyKind, Taxonomy};
pub use splits::{SplitManifest, SplitMode, SplitSpec};
