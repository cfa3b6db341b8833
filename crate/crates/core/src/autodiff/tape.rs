use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use super::AutodiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols { x: Var, start: usize },
    Reshape(Var),
    GraphConv { x: Var, adjacency: Tensor, w: Var, xw: Tensor },
    TemporalConv(Var, Var, ConvGeometry),
    GroupMean { x: Var, groups: usize },
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<f64>, probs: Tensor },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub frames_in: usize,
    pub frames_out: usize,
    pub features: usize,
    pub kernel: usize,
    pub groups: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward walks it from the end.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

fn mismatch(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, detail }
}

fn matrix(t: &Tensor, op: &'static str) -> Result<(usize, usize), AutodiffError> {
    if t.shape().len() != 2 {
        return Err(mismatch(op, format!("expected a matrix, got shape {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Output length of a strided, zero-padded 1-D convolution.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Rows of `adjacency` must each sum to one.
pub const ADJACENCY_TOLERANCE: f64 = 1e-9;

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input whose gradient is never needed.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, parents: &[Var]) -> Result<Var, AutodiffError> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        let requires_grad = self.needs(parents);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = matrix(self.value(a), "matmul")?;
        let (k2, n) = matrix(self.value(b), "matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", format!("[{m}×{k}] · [{k2}×{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let value = self.zip(a, b, |p, q| p + q);
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let value = self.zip(a, b, |p, q| p - q);
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let value = self.zip(a, b, |p, q| p * q);
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    /// Adds a length-`n` bias to every row of an `m × n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (_, n) = self.value(x).rows_cols();
        if self.value(bias).len() != n {
            return Err(mismatch("add_bias", format!("{:?} + bias {:?}", self.shape(x), self.shape(bias))));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_exact_mut(n) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        self.push("add_bias", out, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, AutodiffError> {
        let value = self.value(x).map(|v| v * factor);
        self.push("scale", value, Op::Scale(x, factor), &[x])
    }

    /// Elementwise product with a constant, e.g. a dropout mask.
    pub fn mul_const(&mut self, x: Var, factor: Tensor) -> Result<Var, AutodiffError> {
        if factor.shape() != self.shape(x) {
            return Err(mismatch("mul_const", format!("{:?} vs {:?}", self.shape(x), factor.shape())));
        }
        let data = self.value(x).data().iter().zip(factor.data()).map(|(a, b)| a * b).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        self.push("mul_const", value, Op::MulConst(x, factor), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push("relu", value, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let value = self.value(x).map(|v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        self.push("sigmoid", value, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let value = self.value(x).map(f64::tanh);
        self.push("tanh", value, Op::Tanh(x), &[x])
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let (m, n) = self.value(x).rows_cols();
        if len == 0 || start + len > n {
            return Err(mismatch("slice_cols", format!("cols {start}..{} of {n}", start + len)));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for row in src.chunks_exact(n) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let value = Tensor::new(vec![m, len], out)?;
        self.push("slice_cols", value, Op::SliceCols { x, start }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let value = self.value(x).reshape(shape)?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    /// Spatial graph convolution `a_norm · x · w`.
    ///
    /// `x` may stack several graphs: its rows are split into consecutive
    /// blocks of `N` nodes, where `a_norm` is `N × N`, and each block is
    /// propagated independently.
    pub fn graph_conv(&mut self, x: Var, adjacency: &Tensor, w: Var) -> Result<Var, AutodiffError> {
        let (rows, fin) = matrix(self.value(x), "graph_conv")?;
        let (n, n2) = matrix(adjacency, "graph_conv")?;
        let (fin2, fout) = matrix(self.value(w), "graph_conv")?;
        if n != n2 || fin != fin2 || rows % n != 0 {
            return Err(mismatch(
                "graph_conv",
                format!("x [{rows}×{fin}], a [{n}×{n2}], w [{fin2}×{fout}]"),
            ));
        }
        for (i, row) in adjacency.data().chunks_exact(n).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ADJACENCY_TOLERANCE {
                return Err(AutodiffError::UnnormalizedAdjacency { row: i, sum: s });
            }
        }
        let mut xw = vec![0.0; rows * fout];
        gemm_nn(self.value(x).data(), self.value(w).data(), &mut xw, rows, fin, fout);
        let mut out = vec![0.0; rows * fout];
        let block = n * fout;
        for (src, dst) in xw.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
            gemm_nn(adjacency.data(), src, dst, n, n, fout);
        }
        let value = Tensor::new(vec![rows, fout], out)?;
        let xw = Tensor::new(vec![rows, fout], xw)?;
        let op = Op::GraphConv {
            x,
            adjacency: adjacency.clone(),
            w,
            xw,
        };
        self.push("graph_conv", value, op, &[x, w])
    }

    /// Depthwise temporal convolution over `batch` stacked sequences.
    ///
    /// `x` is `(batch·frames) × F`; `kernel` is `K × G` with `F` a multiple
    /// of `G`, and feature `f` is filtered by kernel column `f mod G`. With
    /// `G = F` every feature has its own filter; with `G = C` for a
    /// `joints·C` layout the filter is shared across joints.
    pub fn temporal_conv(
        &mut self,
        x: Var,
        kernel: Var,
        batch: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Var, AutodiffError> {
        let (rows, features) = matrix(self.value(x), "temporal_conv")?;
        let (k, groups) = matrix(self.value(kernel), "temporal_conv")?;
        if batch == 0 || rows % batch != 0 || features % groups != 0 {
            return Err(mismatch(
                "temporal_conv",
                format!("x [{rows}×{features}] in {batch} sequences, kernel [{k}×{groups}]"),
            ));
        }
        let frames_in = rows / batch;
        let frames_out = conv_output_len(frames_in, k, stride, pad).ok_or_else(|| {
            mismatch("temporal_conv", format!("T={frames_in}, K={k}, stride={stride}, pad={pad}"))
        })?;
        let geo = ConvGeometry {
            batch,
            frames_in,
            frames_out,
            features,
            kernel: k,
            groups,
            stride,
            pad,
        };
        let xs = self.value(x).data();
        let ks = self.value(kernel).data();
        let mut out = vec![0.0; batch * frames_out * features];
        for b in 0..batch {
            for t in 0..frames_out {
                let dst = &mut out[(b * frames_out + t) * features..][..features];
                for tap in 0..k {
                    let src_t = (t * stride + tap) as isize - pad as isize;
                    if src_t < 0 || src_t as usize >= frames_in {
                        continue;
                    }
                    let src = &xs[(b * frames_in + src_t as usize) * features..][..features];
                    let taps = &ks[tap * groups..(tap + 1) * groups];
                    for (f, (d, s)) in dst.iter_mut().zip(src).enumerate() {
                        *d += taps[f % groups] * s;
                    }
                }
            }
        }
        let value = Tensor::new(vec![batch * frames_out, features], out)?;
        self.push("temporal_conv", value, Op::TemporalConv(x, kernel, geo), &[x, kernel])
    }

    /// Mean over consecutive row blocks: `(groups·r) × C` to `groups × C`.
    pub fn group_mean(&mut self, x: Var, groups: usize) -> Result<Var, AutodiffError> {
        let (rows, cols) = self.value(x).rows_cols();
        if groups == 0 || rows % groups != 0 {
            return Err(mismatch("group_mean", format!("{rows} rows into {groups} groups")));
        }
        let per = rows / groups;
        let mut out = vec![0.0; groups * cols];
        for (g, block) in self.value(x).data().chunks_exact(per * cols).enumerate() {
            let dst = &mut out[g * cols..(g + 1) * cols];
            for row in block.chunks_exact(cols) {
                for (d, v) in dst.iter_mut().zip(row) {
                    *d += v;
                }
            }
            for d in dst.iter_mut() {
                *d /= per as f64;
            }
        }
        let value = Tensor::new(vec![groups, cols], out)?;
        self.push("group_mean", value, Op::GroupMean { x, groups }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push("sum", value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.push("mean", value, Op::Mean(x), &[x])
    }

    /// Weighted mean cross-entropy of row-wise softmax against `targets`.
    ///
    /// With class weights `w`, the loss is `Σ w[y_i]·(−ln p_i[y_i]) / Σ w[y_i]`,
    /// so uniform weights reproduce the unweighted mean. Returns the scalar
    /// loss and the softmax probabilities.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        class_weights: Option<&[f64]>,
    ) -> Result<(Var, Tensor), AutodiffError> {
        let (b, k) = matrix(self.value(logits), "softmax_cross_entropy")?;
        if targets.len() != b {
            return Err(mismatch("softmax_cross_entropy", format!("{b} rows, {} targets", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(AutodiffError::IndexOutOfRange { index: bad, classes: k });
        }
        if let Some(w) = class_weights {
            if w.len() != k {
                return Err(mismatch("softmax_cross_entropy", format!("{k} classes, {} weights", w.len())));
            }
        }
        let probs = softmax_rows(self.value(logits));
        let weights: Vec<f64> = targets
            .iter()
            .map(|&t| class_weights.map_or(1.0, |w| w[t]))
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(AutodiffError::NonFinite { op: "softmax_cross_entropy" });
        }
        let mut loss = 0.0;
        for (i, (&t, &w)) in targets.iter().zip(&weights).enumerate() {
            // log-sum-exp form keeps the loss finite for saturated logits.
            let row = self.value(logits).row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += w * (lse - row[t]);
        }
        let value = Tensor::scalar(loss / total);
        let op = Op::SoftmaxCrossEntropy {
            logits,
            targets: targets.to_vec(),
            weights: weights.iter().map(|w| w / total).collect(),
            probs: probs.clone(),
        };
        let var = self.push("softmax_cross_entropy", value, op, &[logits])?;
        Ok((var, probs))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, AutodiffError> {
        if self.value(output).len() != 1 {
            return Err(mismatch("backward", format!("output shape {:?} is not scalar", self.shape(output))));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(self.shape(output), 1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let shaped = |like: Var, data: Vec<f64>| Tensor::new(self.shape(like).to_vec(), data).expect("grad shape");
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).rows_cols();
                let (_, n) = self.value(*b).rows_cols();
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm_nt(g.data(), self.value(*b).data(), &mut da, m, n, k);
                    self.accumulate(grads, *a, shaped(*a, da));
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm_tn(self.value(*a).data(), g.data(), &mut db, m, k, n);
                    self.accumulate(grads, *b, shaped(*b, db));
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let d = g.data().iter().zip(self.value(*b).data()).map(|(g, y)| g * y).collect();
                    self.accumulate(grads, *a, shaped(*a, d));
                }
                if self.wants(*b) {
                    let d = g.data().iter().zip(self.value(*a).data()).map(|(g, x)| g * x).collect();
                    self.accumulate(grads, *b, shaped(*b, d));
                }
            }
            Op::AddBias(x, bias) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, g.clone());
                }
                if self.wants(*bias) {
                    let n = self.value(*bias).len();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks_exact(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *bias, shaped(*bias, db));
                }
            }
            Op::Scale(x, factor) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, g.map(|v| v * factor));
                }
            }
            Op::MulConst(x, factor) => {
                if self.wants(*x) {
                    let d = g.data().iter().zip(factor.data()).map(|(g, f)| g * f).collect();
                    self.accumulate(grads, *x, shaped(*x, d));
                }
            }
            Op::Relu(x) => {
                if self.wants(*x) {
                    let d = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.accumulate(grads, *x, shaped(*x, d));
                }
            }
            Op::Sigmoid(x) => {
                if self.wants(*x) {
                    let d = g.data().iter().zip(node.value.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                    self.accumulate(grads, *x, shaped(*x, d));
                }
            }
            Op::Tanh(x) => {
                if self.wants(*x) {
                    let d = g.data().iter().zip(node.value.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                    self.accumulate(grads, *x, shaped(*x, d));
                }
            }
            Op::SliceCols { x, start } => {
                if self.wants(*x) {
                    let (m, n) = self.value(*x).rows_cols();
                    let len = g.len() / m;
                    let mut d = vec![0.0; m * n];
                    for (dst, src) in d.chunks_exact_mut(n).zip(g.data().chunks_exact(len)) {
                        dst[*start..*start + len].copy_from_slice(src);
                    }
                    self.accumulate(grads, *x, shaped(*x, d));
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, shaped(*x, g.data().to_vec()));
                }
            }
            Op::GraphConv { x, adjacency, w, xw } => {
                let (rows, fout) = xw.rows_cols();
                let n = adjacency.shape()[0];
                let (_, fin) = self.value(*x).rows_cols();
                // d(xw) per block = aᵀ · dy
                let mut dxw = vec![0.0; rows * fout];
                let block = n * fout;
                for (src, dst) in g.data().chunks_exact(block).zip(dxw.chunks_exact_mut(block)) {
                    gemm_tn(adjacency.data(), src, dst, n, n, fout);
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; fin * fout];
                    gemm_tn(self.value(*x).data(), &dxw, &mut dw, rows, fin, fout);
                    self.accumulate(grads, *w, shaped(*w, dw));
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; rows * fin];
                    gemm_nt(&dxw, self.value(*w).data(), &mut dx, rows, fout, fin);
                    self.accumulate(grads, *x, shaped(*x, dx));
                }
            }
            Op::TemporalConv(x, kernel, geo) => {
                let xs = self.value(*x).data();
                let ks = self.value(*kernel).data();
                let f = geo.features;
                let want_x = self.wants(*x);
                let want_k = self.wants(*kernel);
                let mut dx = if want_x { vec![0.0; xs.len()] } else { Vec::new() };
                let mut dk = if want_k { vec![0.0; ks.len()] } else { Vec::new() };
                for b in 0..geo.batch {
                    for t in 0..geo.frames_out {
                        let gy = &g.data()[(b * geo.frames_out + t) * f..][..f];
                        for tap in 0..geo.kernel {
                            let src_t = (t * geo.stride + tap) as isize - geo.pad as isize;
                            if src_t < 0 || src_t as usize >= geo.frames_in {
                                continue;
                            }
                            let base = (b * geo.frames_in + src_t as usize) * f;
                            let taps = &ks[tap * geo.groups..(tap + 1) * geo.groups];
                            if want_x {
                                for (i, gv) in gy.iter().enumerate() {
                                    dx[base + i] += taps[i % geo.groups] * gv;
                                }
                            }
                            if want_k {
                                let dtaps = &mut dk[tap * geo.groups..(tap + 1) * geo.groups];
                                for (i, gv) in gy.iter().enumerate() {
                                    dtaps[i % geo.groups] += xs[base + i] * gv;
                                }
                            }
                        }
                    }
                }
                if want_x {
                    self.accumulate(grads, *x, shaped(*x, dx));
                }
                if want_k {
                    self.accumulate(grads, *kernel, shaped(*kernel, dk));
                }
            }
            Op::GroupMean { x, groups } => {
                if self.wants(*x) {
                    let (rows, cols) = self.value(*x).rows_cols();
                    let per = rows / groups;
                    let mut d = vec![0.0; rows * cols];
                    for (r, dst) in d.chunks_exact_mut(cols).enumerate() {
                        let src = g.row(r / per);
                        for (dv, sv) in dst.iter_mut().zip(src) {
                            *dv = sv / per as f64;
                        }
                    }
                    self.accumulate(grads, *x, shaped(*x, d));
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let t = Tensor::filled(self.shape(*x), g.data()[0]);
                    self.accumulate(grads, *x, t);
                }
            }
            Op::Mean(x) => {
                if self.wants(*x) {
                    let n = self.value(*x).len() as f64;
                    let t = Tensor::filled(self.shape(*x), g.data()[0] / n);
                    self.accumulate(grads, *x, t);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                if self.wants(*logits) {
                    let (_, k) = probs.rows_cols();
                    let scale = g.data()[0];
                    let mut d = probs.data().to_vec();
                    for (i, row) in d.chunks_exact_mut(k).enumerate() {
                        row[targets[i]] -= 1.0;
                        for v in row.iter_mut() {
                            *v *= weights[i] * scale;
                        }
                    }
                    self.accumulate(grads, *logits, shaped(*logits, d));
                }
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let (_, k) = logits.rows_cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}
