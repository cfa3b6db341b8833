//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records each operation together with whatever it needs for
//! the backward pass. Every forward op checks its inputs' shapes and the
//! finiteness of its output. Summation order is fixed (row-major,
//! sequential), so identical inputs give bit-identical results.

mod cells;
mod gradcheck;
mod tape;
mod tensor;

use thiserror::Error;

pub use cells::{gru_step, lstm_step, GruVars, LstmVars};
pub use gradcheck::{gradcheck, gradient, relative_error, GRADCHECK_EPS};
pub use tape::{conv_output_len, softmax_rows, ConvGeometry, Gradients, Tape, Var, ADJACENCY_TOLERANCE};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("adjacency row {row} sums to {sum}, expected 1")]
    UnnormalizedAdjacency { row: usize, sum: f64 },
    #[error("target class {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
}

/// Mean softmax cross-entropy of `logits` (`B × K`) against `targets`,
/// evaluated without recording gradients.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    targets: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(f64, Tensor), AutodiffError> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let (loss, probs) = tape.softmax_cross_entropy(l, targets, class_weights)?;
    Ok((tape.value(loss).data()[0], probs))
}
