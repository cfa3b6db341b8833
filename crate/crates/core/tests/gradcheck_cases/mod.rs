//! Gradient-check cases: every differentiable tape op and the three network
//! families, each a function of an instance seed returning the worst
//! elementwise relative error. Shared by the gradcheck tests and the
//! acceptance suite.

use ppr_core::autodiff::{gradcheck, gradient, relative_error, gru_step, lstm_step, AutodiffError, GruVars, LstmVars, Tape, Tensor, Var, GRADCHECK_EPS};
use ppr_core::models::{init_params, CellKind, InputShape, Mode, ModelError, Network};
use ppr_core::{Architecture, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: u64 = 10;
/// Steps tried for whole networks, largest first.
const MODEL_STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];

pub type Case = (&'static str, fn(u64) -> f64);

pub const OP_CASES: &[Case] = &[
    ("matmul", matmul),
    ("add/sub/mul/add_bias/scale", elementwise),
    ("mul_const", mul_const),
    ("sigmoid", sigmoid),
    ("tanh", tanh),
    ("relu", relu),
    ("slice_cols", slice_cols),
    ("reshape", reshape),
    ("group_mean", group_mean),
    ("mean", mean),
    ("graph_conv", graph_conv),
    ("temporal_conv", temporal_conv),
    ("softmax_cross_entropy", cross_entropy),
    ("weighted softmax_cross_entropy", weighted_cross_entropy),
    ("gru_step", gru),
    ("lstm_step", lstm),
];

pub const MODEL_CASES: &[Case] = &[("mlp", mlp), ("rnn", rnn), ("stgcn", stgcn)];

/// Worst error of `case` over seeds `0..INSTANCES`.
pub fn worst(case: fn(u64) -> f64) -> f64 {
    (0..INSTANCES).map(case).fold(0.0, f64::max)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so relu kinks stay out of the difference stencil.
fn off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn row_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let mut a = random(rng, &[n, n]).map(|v| v.abs() + 0.1);
    for row in a.data_mut().chunks_exact_mut(n) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    a
}

/// Contracts an arbitrary tensor to a scalar with fixed random weights so
/// every output element gets a distinct upstream gradient.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = random(&mut rng, tape.shape(y));
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

fn check<F>(f: F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    gradcheck(f, inputs, GRADCHECK_EPS).unwrap()
}

fn unary(seed: u64, inputs: &[Tensor], op: fn(&mut Tape, Var) -> Result<Var, AutodiffError>) -> f64 {
    check(
        |t, v| {
            let y = op(t, v[0])?;
            project(t, y, seed)
        },
        inputs,
    )
}

fn matmul(s: u64) -> f64 {
    let mut r = rng(s);
    let inputs = [random(&mut r, &[3, 4]), random(&mut r, &[4, 2])];
    check(
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            project(t, y, s)
        },
        &inputs,
    )
}

fn elementwise(s: u64) -> f64 {
    let mut r = rng(s);
    let inputs = [random(&mut r, &[3, 4]), random(&mut r, &[3, 4]), random(&mut r, &[4])];
    check(
        |t, v| {
            let a = t.add(v[0], v[1])?;
            let b = t.mul(a, v[1])?;
            let c = t.sub(b, v[0])?;
            let d = t.add_bias(c, v[2])?;
            let e = t.scale(d, -1.7)?;
            project(t, e, s)
        },
        &inputs,
    )
}

fn mul_const(s: u64) -> f64 {
    let mut r = rng(s);
    let inputs = [random(&mut r, &[3, 4])];
    let mask = random(&mut r, &[3, 4]);
    check(
        |t, v| {
            let y = t.mul_const(v[0], mask.clone())?;
            project(t, y, s)
        },
        &inputs,
    )
}

fn sigmoid(s: u64) -> f64 {
    let inputs = [random(&mut rng(s), &[4, 3]).map(|v| 3.0 * v)];
    unary(s, &inputs, Tape::sigmoid)
}

fn tanh(s: u64) -> f64 {
    let inputs = [random(&mut rng(s), &[4, 3]).map(|v| 3.0 * v)];
    unary(s, &inputs, Tape::tanh)
}

fn relu(s: u64) -> f64 {
    let inputs = [off_kink(&mut rng(s), &[4, 3])];
    unary(s, &inputs, Tape::relu)
}

fn slice_cols(s: u64) -> f64 {
    unary(s, &[random(&mut rng(s), &[4, 6])], |t, x| t.slice_cols(x, 2, 3))
}

fn reshape(s: u64) -> f64 {
    unary(s, &[random(&mut rng(s), &[4, 6])], |t, x| t.reshape(x, &[8, 3]))
}

fn group_mean(s: u64) -> f64 {
    unary(s, &[random(&mut rng(s), &[4, 6])], |t, x| t.group_mean(x, 2))
}

fn mean(s: u64) -> f64 {
    check(
        |t, v| {
            let y = t.tanh(v[0])?;
            t.mean(y)
        },
        &[random(&mut rng(s), &[4, 6])],
    )
}

fn graph_conv(s: u64) -> f64 {
    let mut r = rng(s);
    let n = 5;
    let adjacency = row_stochastic(&mut r, n);
    // Two stacked blocks of n rows.
    let inputs = [random(&mut r, &[2 * n, 3]), random(&mut r, &[3, 4])];
    check(
        |t, v| {
            let y = t.graph_conv(v[0], &adjacency, v[1])?;
            project(t, y, s)
        },
        &inputs,
    )
}

fn temporal_conv(s: u64) -> f64 {
    let mut r = rng(s);
    let (batch, frames, features, groups) = (2, 7, 6, 3);
    let stride = 1 + (s as usize % 2);
    let inputs = [random(&mut r, &[batch * frames, features]), random(&mut r, &[3, groups])];
    check(
        |t, v| {
            let y = t.temporal_conv(v[0], v[1], batch, stride, 1)?;
            project(t, y, s)
        },
        &inputs,
    )
}

const CE_TARGETS: [usize; 5] = [0, 3, 1, 1, 2];

fn cross_entropy(s: u64) -> f64 {
    let inputs = [random(&mut rng(s), &[5, 4]).map(|v| 2.0 * v)];
    check(|t, v| Ok(t.softmax_cross_entropy(v[0], &CE_TARGETS, None)?.0), &inputs)
}

fn weighted_cross_entropy(s: u64) -> f64 {
    let inputs = [random(&mut rng(s), &[5, 4]).map(|v| 2.0 * v)];
    let weights = [0.5, 2.0, 1.0, 3.0];
    check(|t, v| Ok(t.softmax_cross_entropy(v[0], &CE_TARGETS, Some(&weights))?.0), &inputs)
}

/// Two chained steps, so the hidden-state path is exercised too.
fn gru(s: u64) -> f64 {
    let mut r = rng(s);
    let (b, d, h) = (2, 3, 4);
    let inputs = [
        random(&mut r, &[b, d]),
        random(&mut r, &[b, h]),
        random(&mut r, &[d, 3 * h]),
        random(&mut r, &[h, 3 * h]),
        random(&mut r, &[3 * h]),
        random(&mut r, &[3 * h]),
    ];
    check(
        |t, v| {
            let p = GruVars {
                w_input: v[2],
                w_hidden: v[3],
                b_input: v[4],
                b_hidden: v[5],
            };
            let h1 = gru_step(t, v[0], v[1], &p)?;
            let h2 = gru_step(t, v[0], h1, &p)?;
            project(t, h2, s)
        },
        &inputs,
    )
}

fn lstm(s: u64) -> f64 {
    let mut r = rng(s);
    let (b, d, h) = (2, 3, 4);
    let inputs = [
        random(&mut r, &[b, d]),
        random(&mut r, &[b, h]),
        random(&mut r, &[b, h]),
        random(&mut r, &[d, 4 * h]),
        random(&mut r, &[h, 4 * h]),
        random(&mut r, &[4 * h]),
    ];
    check(
        |t, v| {
            let p = LstmVars {
                w_input: v[3],
                w_hidden: v[4],
                bias: v[5],
            };
            let (h1, c1) = lstm_step(t, v[0], v[1], v[2], &p)?;
            let (h2, c2) = lstm_step(t, v[0], h1, c1, &p)?;
            let y = t.add(h2, c2)?;
            project(t, y, s)
        },
        &inputs,
    )
}

fn model_error(architecture: Architecture, seed: u64) -> f64 {
    let input = InputShape {
        frames: 6,
        joints: 4,
        channels: 3,
    };
    let config = ModelConfig::new(architecture, input, 3);
    let network = Network::new(config.clone()).unwrap();
    let params = init_params(&config, seed).unwrap();
    let x = random(&mut rng(seed), &[2, input.flat_len()]);
    let targets = [seed as usize % 3, (seed as usize + 1) % 3];
    let mut inputs: Vec<Tensor> = params.tensors().cloned().collect();
    inputs.push(x);
    let n = params.len();
    let f = |t: &mut Tape, v: &[Var]| {
        let logits = network.forward(t, &v[..n], v[n], &mut Mode::Eval).map_err(|e| match e {
            ModelError::Autodiff(a) => a,
            other => panic!("{other}"),
        })?;
        Ok(t.softmax_cross_entropy(logits, &targets, None)?.0)
    };
    multiscale_error(&f, &inputs)
}

/// Worst elementwise relative error, where each element is compared with
/// the central difference at the step that agrees best. A network has
/// hundreds of relu inputs, so at a fixed step an occasional stencil
/// straddles a kink; a wrong gradient disagrees at every step.
fn multiscale_error<F>(f: &F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let (_, analytic) = gradient(f, inputs).unwrap();
    let mut work = inputs.to_vec();
    let mut worst: f64 = 0.0;
    for (which, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = work[which].data()[i];
            let mut best = f64::INFINITY;
            for eps in MODEL_STEPS {
                work[which].data_mut()[i] = orig + eps;
                let plus = gradient(f, &work).unwrap().0;
                work[which].data_mut()[i] = orig - eps;
                let minus = gradient(f, &work).unwrap().0;
                best = best.min(relative_error(grad.data()[i], (plus - minus) / (2.0 * eps)));
            }
            work[which].data_mut()[i] = orig;
            worst = worst.max(best);
        }
    }
    worst
}

fn mlp(seed: u64) -> f64 {
    model_error(Architecture::Mlp { layers: 2, hidden_dim: 5 }, seed)
}

fn rnn(seed: u64) -> f64 {
    let cell = if seed.is_multiple_of(2) { CellKind::Gru } else { CellKind::Lstm };
    model_error(Architecture::Rnn { cell, layers: 2, hidden_dim: 4 }, seed)
}

fn stgcn(seed: u64) -> f64 {
    model_error(
        Architecture::Stgcn {
            blocks: 2,
            channels: 4,
            temporal_kernel: 3,
            stride: 2,
            groups: 1,
            residual: seed.is_multiple_of(2),
        },
        seed,
    )
}
