//! Gated recurrent cells built from tape operations.
//!
//! Gate layout follows the common convention: GRU columns are
//! `[reset | update | candidate]`, LSTM columns `[input | forget | cell | output]`.

use super::tape::{Tape, Var};
use super::AutodiffError;

/// Recorded parameters of one GRU layer.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    /// `input × 3H`
    pub w_input: Var,
    /// `H × 3H`
    pub w_hidden: Var,
    /// `3H`
    pub b_input: Var,
    /// `3H`
    pub b_hidden: Var,
}

/// Recorded parameters of one LSTM layer.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    /// `input × 4H`
    pub w_input: Var,
    /// `H × 4H`
    pub w_hidden: Var,
    /// `4H`
    pub bias: Var,
}

/// `h_t = (1 − z) ⊙ n + z ⊙ h_prev` with
/// `r = σ(x W_r + b_r + h U_r + c_r)`, `z = σ(x W_z + b_z + h U_z + c_z)`,
/// `n = tanh(x W_n + b_n + r ⊙ (h U_n + c_n))`.
pub fn gru_step(tape: &mut Tape, x: Var, h_prev: Var, p: &GruVars) -> Result<Var, AutodiffError> {
    let hidden = tape.shape(h_prev)[1];
    if tape.shape(p.w_hidden) != [hidden, 3 * hidden] {
        return Err(AutodiffError::ShapeMismatch {
            op: "gru_step",
            detail: format!("hidden {hidden}, recurrent weights {:?}", tape.shape(p.w_hidden)),
        });
    }
    let gx = tape.matmul(x, p.w_input)?;
    let gx = tape.add_bias(gx, p.b_input)?;
    let gh = tape.matmul(h_prev, p.w_hidden)?;
    let gh = tape.add_bias(gh, p.b_hidden)?;

    let xr = tape.slice_cols(gx, 0, hidden)?;
    let hr = tape.slice_cols(gh, 0, hidden)?;
    let r = tape.add(xr, hr)?;
    let r = tape.sigmoid(r)?;

    let xz = tape.slice_cols(gx, hidden, hidden)?;
    let hz = tape.slice_cols(gh, hidden, hidden)?;
    let z = tape.add(xz, hz)?;
    let z = tape.sigmoid(z)?;

    let xn = tape.slice_cols(gx, 2 * hidden, hidden)?;
    let hn = tape.slice_cols(gh, 2 * hidden, hidden)?;
    let gated = tape.mul(r, hn)?;
    let n = tape.add(xn, gated)?;
    let n = tape.tanh(n)?;

    // n + z ⊙ (h_prev − n)
    let diff = tape.sub(h_prev, n)?;
    let keep = tape.mul(z, diff)?;
    tape.add(n, keep)
}

/// Returns `(h_t, c_t)`.
pub fn lstm_step(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, p: &LstmVars) -> Result<(Var, Var), AutodiffError> {
    let hidden = tape.shape(h_prev)[1];
    if tape.shape(p.w_hidden) != [hidden, 4 * hidden] || tape.shape(c_prev) != tape.shape(h_prev) {
        return Err(AutodiffError::ShapeMismatch {
            op: "lstm_step",
            detail: format!("hidden {hidden}, recurrent weights {:?}", tape.shape(p.w_hidden)),
        });
    }
    let gx = tape.matmul(x, p.w_input)?;
    let gh = tape.matmul(h_prev, p.w_hidden)?;
    let gates = tape.add(gx, gh)?;
    let gates = tape.add_bias(gates, p.bias)?;

    let i = tape.slice_cols(gates, 0, hidden)?;
    let i = tape.sigmoid(i)?;
    let f = tape.slice_cols(gates, hidden, hidden)?;
    let f = tape.sigmoid(f)?;
    let g = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let g = tape.tanh(g)?;
    let o = tape.slice_cols(gates, 3 * hidden, hidden)?;
    let o = tape.sigmoid(o)?;

    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}
