//! Deterministic inputs for the kernel and model benchmarks.

use ppr_core::autodiff::Tensor;
use ppr_core::models::InputShape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform `[-1, 1)` entries from a fixed seed.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// Full-size skeleton input: 150 frames of the 27-joint upper body in 3 channels.
pub const SKELETON_INPUT: InputShape = InputShape {
    frames: 150,
    joints: 27,
    channels: 3,
};
