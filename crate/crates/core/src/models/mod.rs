//! Classifiers over fixed-size skeleton sequences.
//!
//! Every trainable network reads a batch as a `B × (T·J·C)` matrix (one
//! flattened sequence per row) and produces `B × K` logits. The majority
//! baseline ignores its input.

mod checkpoint;
mod graph;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{conv_output_len, gru_step, lstm_step, AutodiffError, GruVars, LstmVars, Tape, Tensor, Var};
use crate::ingest::SkeletonSequence;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use graph::SkeletonGraph;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("input shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

/// Model family and its structural hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Architecture {
    /// Predicts the training majority class.
    Baseline,
    /// `layers` hidden rectifier layers over the flattened sequence.
    Mlp { layers: usize, hidden_dim: usize },
    /// Stacked recurrent cells over per-frame joint vectors.
    Rnn { cell: CellKind, layers: usize, hidden_dim: usize },
    /// Spatial graph convolution followed by temporal convolution, per block.
    Stgcn {
        blocks: usize,
        /// Output channels of every block.
        channels: usize,
        /// Odd temporal window.
        temporal_kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        /// Accepted for config compatibility; only 1 is supported.
        #[serde(default = "default_groups")]
        groups: usize,
        #[serde(default = "default_residual")]
        residual: bool,
    },
}

fn default_stride() -> usize {
    2
}

fn default_groups() -> usize {
    1
}

fn default_residual() -> bool {
    true
}

impl Architecture {
    pub fn family(&self) -> &'static str {
        match self {
            Architecture::Baseline => "baseline",
            Architecture::Mlp { .. } => "mlp",
            Architecture::Rnn { .. } => "rnn",
            Architecture::Stgcn { .. } => "stgcn",
        }
    }

    pub fn default_mlp() -> Architecture {
        Architecture::Mlp {
            layers: 2,
            hidden_dim: 128,
        }
    }

    pub fn default_rnn() -> Architecture {
        Architecture::Rnn {
            cell: CellKind::Gru,
            layers: 1,
            hidden_dim: 64,
        }
    }

    pub fn default_stgcn() -> Architecture {
        Architecture::Stgcn {
            blocks: 2,
            channels: 16,
            temporal_kernel: 9,
            stride: 2,
            groups: 1,
            residual: true,
        }
    }

    /// Default architecture of a family name (`baseline`, `mlp`, `rnn`, `stgcn`).
    pub fn default_for(family: &str) -> Option<Architecture> {
        match family {
            "baseline" => Some(Architecture::Baseline),
            "mlp" => Some(Architecture::default_mlp()),
            "rnn" => Some(Architecture::default_rnn()),
            "stgcn" => Some(Architecture::default_stgcn()),
            _ => None,
        }
    }
}

/// Per-sample input geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub frames: usize,
    pub joints: usize,
    pub channels: usize,
}

impl InputShape {
    pub fn of(seq: &SkeletonSequence) -> InputShape {
        let (frames, joints, channels) = seq.shape();
        InputShape {
            frames,
            joints,
            channels,
        }
    }

    pub fn flat_len(&self) -> usize {
        self.frames * self.joints * self.channels
    }

    fn tuple(&self) -> (usize, usize, usize) {
        (self.frames, self.joints, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input: InputShape,
    pub num_classes: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, input: InputShape, num_classes: usize) -> ModelConfig {
        ModelConfig {
            architecture,
            input,
            num_classes,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1".into());
        }
        if self.input.flat_len() == 0 {
            return bad(format!("empty input shape {:?}", self.input));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        match self.architecture {
            Architecture::Baseline => Ok(()),
            Architecture::Mlp { layers, hidden_dim } => {
                if layers > 0 && hidden_dim == 0 {
                    return bad("mlp hidden_dim must be positive".into());
                }
                Ok(())
            }
            Architecture::Rnn { layers, hidden_dim, .. } => {
                if layers == 0 || hidden_dim == 0 {
                    return bad("rnn needs at least one layer and a positive hidden_dim".into());
                }
                Ok(())
            }
            Architecture::Stgcn {
                blocks,
                channels,
                temporal_kernel,
                stride,
                groups,
                ..
            } => {
                if blocks == 0 || channels == 0 || stride == 0 {
                    return bad("stgcn blocks, channels and stride must be positive".into());
                }
                if temporal_kernel % 2 == 0 {
                    return bad(format!("temporal_kernel {temporal_kernel} must be odd"));
                }
                if groups != 1 {
                    return bad(format!("groups = {groups} is not supported; use 1"));
                }
                Ok(())
            }
        }
    }

    /// Temporal length after each STGCN block, starting with the input length.
    pub fn stgcn_frames(&self) -> Vec<usize> {
        let mut out = vec![self.input.frames];
        if let Architecture::Stgcn {
            blocks,
            temporal_kernel,
            stride,
            ..
        } = self.architecture
        {
            for _ in 0..blocks {
                let last = *out.last().expect("non-empty");
                let next = conv_output_len(last, temporal_kernel, stride, (temporal_kernel - 1) / 2).unwrap_or(0);
                out.push(next);
            }
        }
        out
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    entries: Vec<(String, Tensor)>,
}

impl Params {
    pub fn new() -> Params {
        Params::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push((name.into(), tensor));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Records every tensor as a differentiable leaf.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| tape.leaf(t.clone())).collect()
    }

    /// Records every tensor as a constant.
    pub fn constants(&self, tape: &mut Tape) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| tape.constant(t.clone())).collect()
    }
}

/// Dropout is applied only in training mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Parameter shapes of a configuration, in forward order.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let k = config.num_classes;
    let mut out = Vec::new();
    match config.architecture {
        Architecture::Baseline => {}
        Architecture::Mlp { layers, hidden_dim } => {
            let mut width = config.input.flat_len();
            for l in 0..layers {
                out.push((format!("mlp.{l}.weight"), vec![width, hidden_dim]));
                out.push((format!("mlp.{l}.bias"), vec![hidden_dim]));
                width = hidden_dim;
            }
            out.push(("head.weight".into(), vec![width, k]));
            out.push(("head.bias".into(), vec![k]));
        }
        Architecture::Rnn {
            cell,
            layers,
            hidden_dim: h,
        } => {
            let mut width = config.input.joints * config.input.channels;
            for l in 0..layers {
                match cell {
                    CellKind::Gru => {
                        out.push((format!("rnn.{l}.w_input"), vec![width, 3 * h]));
                        out.push((format!("rnn.{l}.w_hidden"), vec![h, 3 * h]));
                        out.push((format!("rnn.{l}.b_input"), vec![3 * h]));
                        out.push((format!("rnn.{l}.b_hidden"), vec![3 * h]));
                    }
                    CellKind::Lstm => {
                        out.push((format!("rnn.{l}.w_input"), vec![width, 4 * h]));
                        out.push((format!("rnn.{l}.w_hidden"), vec![h, 4 * h]));
                        out.push((format!("rnn.{l}.bias"), vec![4 * h]));
                    }
                }
                width = h;
            }
            out.push(("head.weight".into(), vec![h, k]));
            out.push(("head.bias".into(), vec![k]));
        }
        Architecture::Stgcn {
            blocks,
            channels,
            temporal_kernel,
            residual,
            ..
        } => {
            let mut cin = config.input.channels;
            for b in 0..blocks {
                out.push((format!("stgcn.{b}.spatial.weight"), vec![cin, channels]));
                out.push((format!("stgcn.{b}.spatial.bias"), vec![channels]));
                out.push((format!("stgcn.{b}.temporal.kernel"), vec![temporal_kernel, channels]));
                if residual && cin != channels {
                    out.push((format!("stgcn.{b}.residual.weight"), vec![cin, channels]));
                }
                cin = channels;
            }
            out.push(("head.weight".into(), vec![channels, k]));
            out.push(("head.bias".into(), vec![k]));
        }
    }
    out
}

/// Glorot-uniform weights and zero biases, seeded.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Params, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::new();
    for (name, shape) in parameter_shapes(config) {
        let n: usize = shape.iter().product();
        let tensor = if shape.len() == 1 {
            Tensor::zeros(&shape)
        } else {
            let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
            Tensor::new(shape, (0..n).map(|_| rng.gen_range(-limit..limit)).collect())?
        };
        params.push(name, tensor);
    }
    Ok(params)
}

/// Stacks sequences into the `B × (T·J·C)` input matrix.
pub fn batch_input(config: &ModelConfig, seqs: &[&SkeletonSequence]) -> Result<Tensor, ModelError> {
    let mut data = Vec::with_capacity(seqs.len() * config.input.flat_len());
    for seq in seqs {
        if seq.shape() != config.input.tuple() {
            return Err(ModelError::ShapeMismatch {
                expected: config.input.tuple(),
                found: seq.shape(),
            });
        }
        data.extend_from_slice(seq.data());
    }
    Ok(Tensor::new(vec![seqs.len(), config.input.flat_len()], data)?)
}

fn dropout(tape: &mut Tape, x: Var, p: f64, mode: &mut Mode) -> Result<Var, AutodiffError> {
    match mode {
        Mode::Train(rng) if p > 0.0 => {
            let keep = 1.0 / (1.0 - p);
            let shape = tape.shape(x).to_vec();
            let n: usize = shape.iter().product();
            let mask = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
            tape.mul_const(x, Tensor::new(shape, mask)?)
        }
        _ => Ok(x),
    }
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

/// A trainable architecture bound to its skeleton graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: ModelConfig,
    graph: SkeletonGraph,
}

impl Network {
    /// Uses the upper-body skeleton for 27 joints and a chain otherwise.
    pub fn new(config: ModelConfig) -> Result<Network, ModelError> {
        config.validate()?;
        let graph = if config.input.joints == crate::ingest::UPPER_BODY_JOINTS.len() {
            SkeletonGraph::upper_body()
        } else {
            SkeletonGraph::chain(config.input.joints)
        };
        Network::with_graph(config, graph)
    }

    pub fn with_graph(config: ModelConfig, graph: SkeletonGraph) -> Result<Network, ModelError> {
        config.validate()?;
        if graph.node_count() != config.input.joints {
            return Err(ModelError::InvalidGraph(format!(
                "{} nodes for {} joints",
                graph.node_count(),
                config.input.joints
            )));
        }
        Ok(Network { config, graph })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn graph(&self) -> &SkeletonGraph {
        &self.graph
    }

    /// Records the forward pass of `x` (`B × (T·J·C)`) and returns `B × K` logits.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var, mode: &mut Mode) -> Result<Var, ModelError> {
        let expected = parameter_shapes(&self.config);
        if params.len() != expected.len()
            || params.iter().zip(&expected).any(|(&v, (_, s))| tape.shape(v) != s.as_slice())
        {
            return Err(ModelError::InvalidConfig(format!(
                "parameters do not match {} architecture",
                self.config.architecture.family()
            )));
        }
        let (batch, width) = tape.value(x).rows_cols();
        if width != self.config.input.flat_len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "forward",
                detail: format!("{width} input features, expected {}", self.config.input.flat_len()),
            }
            .into());
        }
        match self.config.architecture {
            Architecture::Baseline => Err(ModelError::InvalidConfig("the baseline has no network".into())),
            Architecture::Mlp { layers, .. } => self.forward_mlp(tape, params, x, layers, mode),
            Architecture::Rnn { cell, layers, .. } => self.forward_rnn(tape, params, x, cell, layers, mode),
            Architecture::Stgcn { .. } => self.forward_stgcn(tape, params, x, batch, mode),
        }
    }

    fn forward_mlp(&self, tape: &mut Tape, p: &[Var], x: Var, layers: usize, mode: &mut Mode) -> Result<Var, ModelError> {
        let mut h = x;
        for l in 0..layers {
            h = linear(tape, h, p[2 * l], p[2 * l + 1])?;
            h = tape.relu(h)?;
            h = dropout(tape, h, self.config.dropout, mode)?;
        }
        Ok(linear(tape, h, p[2 * layers], p[2 * layers + 1])?)
    }

    fn forward_rnn(
        &self,
        tape: &mut Tape,
        p: &[Var],
        x: Var,
        cell: CellKind,
        layers: usize,
        mode: &mut Mode,
    ) -> Result<Var, ModelError> {
        let batch = tape.shape(x)[0];
        let frame_width = self.config.input.joints * self.config.input.channels;
        let per_layer = match cell {
            CellKind::Gru => 4,
            CellKind::Lstm => 3,
        };
        let hidden = tape.shape(p[1])[0];
        let mut h: Vec<Var> = (0..layers).map(|_| tape.constant(Tensor::zeros(&[batch, hidden]))).collect();
        let mut c: Vec<Var> = (0..layers).map(|_| tape.constant(Tensor::zeros(&[batch, hidden]))).collect();
        for t in 0..self.config.input.frames {
            let mut input = tape.slice_cols(x, t * frame_width, frame_width)?;
            for l in 0..layers {
                let q = &p[l * per_layer..(l + 1) * per_layer];
                match cell {
                    CellKind::Gru => {
                        let vars = GruVars {
                            w_input: q[0],
                            w_hidden: q[1],
                            b_input: q[2],
                            b_hidden: q[3],
                        };
                        h[l] = gru_step(tape, input, h[l], &vars)?;
                    }
                    CellKind::Lstm => {
                        let vars = LstmVars {
                            w_input: q[0],
                            w_hidden: q[1],
                            bias: q[2],
                        };
                        (h[l], c[l]) = lstm_step(tape, input, h[l], c[l], &vars)?;
                    }
                }
                input = if l + 1 < layers {
                    dropout(tape, h[l], self.config.dropout, mode)?
                } else {
                    h[l]
                };
            }
        }
        let last = dropout(tape, h[layers - 1], self.config.dropout, mode)?;
        let head = layers * per_layer;
        Ok(linear(tape, last, p[head], p[head + 1])?)
    }

    fn forward_stgcn(&self, tape: &mut Tape, p: &[Var], x: Var, batch: usize, mode: &mut Mode) -> Result<Var, ModelError> {
        let Architecture::Stgcn {
            blocks,
            channels,
            temporal_kernel,
            stride,
            residual,
            ..
        } = self.config.architecture
        else {
            unreachable!("dispatched on architecture");
        };
        let joints = self.config.input.joints;
        let pad = (temporal_kernel - 1) / 2;
        let mut frames = self.config.input.frames;
        let mut cin = self.config.input.channels;
        // Rows are (sequence, frame, joint) nodes; columns are channels.
        let mut h = tape.reshape(x, &[batch * frames * joints, cin])?;
        let mut next = 0;
        for _ in 0..blocks {
            let (w, b, kernel) = (p[next], p[next + 1], p[next + 2]);
            next += 3;
            let g = tape.graph_conv(h, self.graph.adjacency(), w)?;
            let g = tape.add_bias(g, b)?;
            let g = tape.relu(g)?;
            let g = tape.reshape(g, &[batch * frames, joints * channels])?;
            let mut out = tape.temporal_conv(g, kernel, batch, stride, pad)?;
            let frames_out = tape.shape(out)[0] / batch;
            if residual {
                let mut skip = tape.reshape(h, &[batch * frames, joints * cin])?;
                if stride > 1 {
                    let pick = tape.constant(Tensor::filled(&[1, cin], 1.0));
                    skip = tape.temporal_conv(skip, pick, batch, stride, 0)?;
                }
                if cin != channels {
                    let proj = p[next];
                    next += 1;
                    let flat = tape.reshape(skip, &[batch * frames_out * joints, cin])?;
                    let projected = tape.matmul(flat, proj)?;
                    skip = tape.reshape(projected, &[batch * frames_out, joints * channels])?;
                }
                out = tape.add(out, skip)?;
            }
            let out = dropout(tape, out, self.config.dropout, mode)?;
            h = tape.reshape(out, &[batch * frames_out * joints, channels])?;
            frames = frames_out;
            cin = channels;
        }
        let pooled = tape.group_mean(h, batch)?;
        Ok(linear(tape, pooled, p[next], p[next + 1])?)
    }

    /// Inference logits (`B × K`) without dropout.
    pub fn logits(&self, params: &Params, input: &Tensor) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let vars = params.constants(&mut tape);
        let x = tape.constant(input.clone());
        let out = self.forward(&mut tape, &vars, x, &mut Mode::Eval)?;
        Ok(tape.value(out).clone())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Most frequent class index; ties go to the lowest index.
pub fn majority_index(targets: &[usize], num_classes: usize) -> Option<usize> {
    if targets.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; num_classes];
    for &t in targets {
        counts[t] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Some(best)
}

/// Where a trained model came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub split_hash: String,
    pub epochs: usize,
}

/// An immutable trained classifier with its class list.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    /// Class codes in logit order.
    pub classes: Vec<String>,
    /// Training majority class; the baseline's only prediction.
    pub majority: usize,
    pub params: Params,
    pub provenance: Provenance,
    network: Option<Network>,
}

/// Batch size used for inference.
const INFERENCE_BATCH: usize = 64;

impl TrainedModel {
    pub fn new(
        config: ModelConfig,
        classes: Vec<String>,
        majority: usize,
        params: Params,
        provenance: Provenance,
    ) -> Result<TrainedModel, ModelError> {
        let network = match config.architecture {
            Architecture::Baseline => None,
            _ => Some(Network::new(config.clone())?),
        };
        TrainedModel::assemble(config, classes, majority, params, provenance, network)
    }

    pub fn with_network(
        network: Network,
        classes: Vec<String>,
        majority: usize,
        params: Params,
        provenance: Provenance,
    ) -> Result<TrainedModel, ModelError> {
        let config = network.config().clone();
        TrainedModel::assemble(config, classes, majority, params, provenance, Some(network))
    }

    fn assemble(
        config: ModelConfig,
        classes: Vec<String>,
        majority: usize,
        params: Params,
        provenance: Provenance,
        network: Option<Network>,
    ) -> Result<TrainedModel, ModelError> {
        config.validate()?;
        if classes.len() != config.num_classes || majority >= config.num_classes {
            return Err(ModelError::InvalidConfig(format!(
                "{} classes (majority {majority}) for num_classes {}",
                classes.len(),
                config.num_classes
            )));
        }
        let shapes = parameter_shapes(&config);
        let matches = params.len() == shapes.len()
            && params.iter().zip(&shapes).all(|((n, t), (en, es))| n == en && t.shape() == es.as_slice());
        if !matches {
            return Err(ModelError::InvalidConfig("parameter names or shapes do not match the config".into()));
        }
        Ok(TrainedModel {
            config,
            classes,
            majority,
            params,
            provenance,
            network,
        })
    }

    /// A majority-class baseline.
    pub fn baseline(input: InputShape, classes: Vec<String>, majority: usize) -> Result<TrainedModel, ModelError> {
        let config = ModelConfig::new(Architecture::Baseline, input, classes.len());
        TrainedModel::new(config, classes, majority, Params::new(), Provenance::default())
    }

    pub fn network(&self) -> Option<&Network> {
        self.network.as_ref()
    }

    /// Logits for each sequence (`B × K`); the baseline emits a one-hot row.
    pub fn logits(&self, seqs: &[&SkeletonSequence]) -> Result<Tensor, ModelError> {
        let k = self.config.num_classes;
        let Some(network) = &self.network else {
            for seq in seqs {
                if seq.shape() != self.config.input.tuple() {
                    return Err(ModelError::ShapeMismatch {
                        expected: self.config.input.tuple(),
                        found: seq.shape(),
                    });
                }
            }
            let mut data = vec![0.0; seqs.len() * k];
            for row in data.chunks_exact_mut(k) {
                row[self.majority] = 1.0;
            }
            return Ok(Tensor::new(vec![seqs.len(), k], data)?);
        };
        let mut data = Vec::with_capacity(seqs.len() * k);
        for chunk in seqs.chunks(INFERENCE_BATCH) {
            let input = batch_input(&self.config, chunk)?;
            data.extend_from_slice(network.logits(&self.params, &input)?.data());
        }
        Ok(Tensor::new(vec![seqs.len(), k], data)?)
    }

    pub fn predict_batch(&self, seqs: &[&SkeletonSequence]) -> Result<Vec<usize>, ModelError> {
        if self.network.is_none() {
            return Ok(vec![self.majority; seqs.len()]);
        }
        let logits = self.logits(seqs)?;
        Ok((0..seqs.len()).map(|i| argmax(logits.row(i))).collect())
    }

    pub fn predict(&self, seq: &SkeletonSequence) -> Result<usize, ModelError> {
        Ok(self.predict_batch(&[seq])?[0])
    }
}
