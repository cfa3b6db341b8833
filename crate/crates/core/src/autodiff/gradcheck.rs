use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::AutodiffError;

/// Default central-difference step.
pub const GRADCHECK_EPS: f64 = 1e-5;

/// Reverse-mode gradient of a scalar function with respect to each input.
/// Inputs the function never touches get an all-zero gradient.
pub fn gradient<F>(f: &F, inputs: &[Tensor]) -> Result<(f64, Vec<Tensor>), AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out).data()[0];
    let mut grads = tape.backward(out)?;
    let per_input = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, per_input))
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).data()[0])
}

/// Relative error used by [`gradcheck`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Maximum elementwise relative error between the reverse-mode gradient and
/// central finite differences with step `eps`.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let (_, analytic) = gradient(&f, inputs)?;
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut worst: f64 = 0.0;
    for (which, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = work[which].data()[i];
            work[which].data_mut()[i] = orig + eps;
            let plus = evaluate(&f, &work)?;
            work[which].data_mut()[i] = orig - eps;
            let minus = evaluate(&f, &work)?;
            work[which].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
    }
    Ok(worst)
}
