//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Operations are recorded in topological order as they execute; backward
//! replays the tape in exact reverse order, so gradients are deterministic
//! bit-for-bit. Leaf gradients accumulate across `backward` calls until
//! [`Tape::zero_grad`] is called.
//!
//! Scope is deliberately narrow: dense f64 tensors, first derivatives only,
//! no broadcasting beyond scalar·tensor and row-vector bias.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// matrix (r×c) + row vector (c), broadcast over rows
    AddRowBias(NodeId, NodeId),
    Transpose(NodeId),
    Gelu(NodeId),
    SoftmaxRows(NodeId),
    /// mean over axis 0: (r×c) → (1×c)
    MeanRows(NodeId),
    Reshape(NodeId),
    ConcatRows(Vec<NodeId>),
    SumAll(NodeId),
    /// rows pooled by index groups: (P×c) → (groups.len()×c)
    WindowMean(NodeId, Vec<Vec<usize>>),
    /// same-padding 2-D convolution over an h×w grid stored as (h·w)×c_in
    Conv2dSame {
        input: NodeId,
        weight: NodeId,
        h: usize,
        w: usize,
    },
    /// mean cross-entropy of logits (B×k) against class labels, softmax inside
    CrossEntropy(NodeId, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Persistent accumulated gradient; leaves only.
    grad: Option<Vec<f64>>,
}

/// Linear tape of recorded operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn gelu_scalar(x: f64) -> f64 {
    x * 0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

fn gelu_deriv(x: f64) -> f64 {
    let phi_cdf = 0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2));
    let phi_pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
    phi_cdf + x * phi_pdf
}

/// C = A·B with A m×k, B k×n. ikj loop order over row-major storage.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for t in 0..k {
            let av = a[i * k + t];
            if av == 0.0 {
                continue;
            }
            let brow = &b[t * n..(t + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a leaf, if it tracks one.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = &mut node.grad {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        let grad = requires_grad.then(|| vec![0.0; value.numel()]);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<NodeId, CoreError> {
        if !value.data().iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite { context: "op output" });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = matmul_raw(ta.data(), tb.data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        self.push(value, Op::MatMul(a, b), self.rg(&[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "add",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::Add(a, b), self.rg(&[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CoreError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "mul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::Mul(a, b), self.rg(&[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, CoreError> {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::Scale(a, factor), self.rg(&[a]))
    }

    /// Broadcast a length-c bias row over every row of an r×c matrix.
    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, CoreError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        let (r, c) = (ta.rows(), ta.cols());
        if tb.numel() != c {
            return Err(CoreError::ShapeMismatch {
                op: "add_row_bias",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let mut data = ta.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += tb.data()[j];
            }
        }
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::AddRowBias(a, bias), self.rg(&[a, bias]))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, CoreError> {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = ta.data()[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], data)?;
        self.push(value, Op::Transpose(a), self.rg(&[a]))
    }

    /// Element-wise GELU, exact erf form: x·Φ(x).
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId, CoreError> {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| gelu_scalar(x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::Gelu(a), self.rg(&[a]))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, CoreError> {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = ta.data().to_vec();
        for i in 0..r {
            softmax_row(&mut data[i * c..(i + 1) * c]);
        }
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::SoftmaxRows(a), self.rg(&[a]))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId, CoreError> {
        let ta = &self.nodes[a.0].value;
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                data[j] += ta.data()[i * c + j];
            }
        }
        data.iter_mut().for_each(|v| *v /= r as f64);
        let value = Tensor::new(vec![1, c], data)?;
        self.push(value, Op::MeanRows(a), self.rg(&[a]))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId, CoreError> {
        let ta = &self.nodes[a.0].value;
        let numel: usize = shape.iter().product();
        if numel != ta.numel() {
            return Err(CoreError::ShapeMismatch {
                op: "reshape",
                left: ta.shape().to_vec(),
                right: shape,
            });
        }
        let value = Tensor::new(shape, ta.data().to_vec())?;
        self.push(value, Op::Reshape(a), self.rg(&[a]))
    }

    /// Stack matrices with equal column counts along axis 0.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, CoreError> {
        if parts.is_empty() {
            return Err(CoreError::Contract("concat_rows of zero tensors".into()));
        }
        let c = self.nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = &self.nodes[p.0].value;
            if t.cols() != c {
                return Err(CoreError::ShapeMismatch {
                    op: "concat_rows",
                    left: vec![rows, c],
                    right: t.shape().to_vec(),
                });
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![rows, c], data)?;
        self.push(value, Op::ConcatRows(parts.to_vec()), self.rg(parts))
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, CoreError> {
        let ta = &self.nodes[a.0].value;
        let s: f64 = ta.data().iter().sum();
        let value = Tensor::new(vec![1], vec![s])?;
        self.push(value, Op::SumAll(a), self.rg(&[a]))
    }

    /// Pool rows of a P×c matrix by arithmetic mean over the given index
    /// groups. Output row q is the mean of input rows in `groups[q]`.
    pub fn window_mean(&mut self, a: NodeId, groups: &[Vec<usize>]) -> Result<NodeId, CoreError> {
        let ta = &self.nodes[a.0].value;
        let (p, c) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; groups.len() * c];
        for (q, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(CoreError::Geometry("empty pooling window".into()));
            }
            for &idx in group {
                if idx >= p {
                    return Err(CoreError::Geometry(format!(
                        "window index {idx} out of range for {p} rows"
                    )));
                }
                for j in 0..c {
                    data[q * c + j] += ta.data()[idx * c + j];
                }
            }
            let n = group.len() as f64;
            for j in 0..c {
                data[q * c + j] /= n;
            }
        }
        let value = Tensor::new(vec![groups.len(), c], data)?;
        self.push(value, Op::WindowMean(a, groups.to_vec()), self.rg(&[a]))
    }

    /// Same-padding 2-D convolution. `input` is an h×w grid stored row-major
    /// as an (h·w)×c_in matrix; `weight` has shape [k, k, c_in, c_out] with
    /// k odd. Output is (h·w)×c_out.
    pub fn conv2d_same(
        &mut self,
        input: NodeId,
        weight: NodeId,
        h: usize,
        w: usize,
    ) -> Result<NodeId, CoreError> {
        let ti = &self.nodes[input.0].value;
        let tw = &self.nodes[weight.0].value;
        let ws = tw.shape();
        if ws.len() != 4 || ws[0] != ws[1] || ws[0] % 2 == 0 {
            return Err(CoreError::ShapeMismatch {
                op: "conv2d_same (weight must be [k,k,c_in,c_out], k odd)",
                left: ti.shape().to_vec(),
                right: ws.to_vec(),
            });
        }
        let (k, c_in, c_out) = (ws[0], ws[2], ws[3]);
        if ti.rows() != h * w || ti.cols() != c_in {
            return Err(CoreError::ShapeMismatch {
                op: "conv2d_same",
                left: ti.shape().to_vec(),
                right: vec![h * w, c_in],
            });
        }
        let pad = k / 2;
        let mut out = vec![0.0; h * w * c_out];
        let wd = tw.data();
        let id = ti.data();
        for y in 0..h {
            for x in 0..w {
                for dy in 0..k {
                    let sy = y as isize + dy as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for dx in 0..k {
                        let sx = x as isize + dx as isize - pad as isize;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let in_row = &id[(sy as usize * w + sx as usize) * c_in..][..c_in];
                        let out_row = &mut out[(y * w + x) * c_out..][..c_out];
                        for ci in 0..c_in {
                            let iv = in_row[ci];
                            let wrow = &wd[((dy * k + dx) * c_in + ci) * c_out..][..c_out];
                            for co in 0..c_out {
                                out_row[co] += iv * wrow[co];
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![h * w, c_out], out)?;
        self.push(
            value,
            Op::Conv2dSame { input, weight, h, w },
            self.rg(&[input, weight]),
        )
    }

    /// Mean cross-entropy of logits (B×k) against integer class labels;
    /// softmax is fused for stability.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId, CoreError> {
        let tl = &self.nodes[logits.0].value;
        let (b, k) = (tl.rows(), tl.cols());
        if labels.len() != b {
            return Err(CoreError::ShapeMismatch {
                op: "cross_entropy",
                left: tl.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(CoreError::Contract(format!(
                    "label {label} out of range for {k} classes"
                )));
            }
            let row = &tl.data()[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
            loss += lse - row[label];
        }
        let value = Tensor::new(vec![1], vec![loss / b as f64])?;
        self.push(
            value,
            Op::CrossEntropy(logits, labels.to_vec()),
            self.rg(&[logits]),
        )
    }

    /// Reverse pass from a scalar loss node. Gradients of `requires_grad`
    /// leaves accumulate into their persistent buffers.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), CoreError> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(CoreError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        // scratch adjoints, one per node, reset every call
        let mut adj: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.numel()])
            .collect();
        adj[loss.0][0] = 1.0;

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || adj[i].iter().all(|&v| v == 0.0) {
                continue;
            }
            let g = core::mem::take(&mut adj[i]);
            match self.nodes[i].op.clone() {
                Op::Leaf => {
                    adj[i] = g;
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let (m, k) = (ta.rows(), ta.cols());
                    let n = tb.cols();
                    // dA = dC·Bᵀ
                    if self.nodes[a.0].requires_grad {
                        for ii in 0..m {
                            for t in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[ii * n + j] * tb.data()[t * n + j];
                                }
                                adj[a.0][ii * k + t] += s;
                            }
                        }
                    }
                    // dB = Aᵀ·dC
                    if self.nodes[b.0].requires_grad {
                        for t in 0..k {
                            for ii in 0..m {
                                let av = ta.data()[ii * k + t];
                                if av == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    adj[b.0][t * n + j] += av * g[ii * n + j];
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (dst, &gv) in adj[a.0].iter_mut().zip(&g) {
                        *dst += gv;
                    }
                    for (dst, &gv) in adj[b.0].iter_mut().zip(&g) {
                        *dst += gv;
                    }
                }
                Op::Mul(a, b) => {
                    let tb = self.nodes[b.0].value.data().to_vec();
                    let ta = self.nodes[a.0].value.data().to_vec();
                    for (idx, &gv) in g.iter().enumerate() {
                        adj[a.0][idx] += gv * tb[idx];
                        adj[b.0][idx] += gv * ta[idx];
                    }
                }
                Op::Scale(a, factor) => {
                    for (dst, &gv) in adj[a.0].iter_mut().zip(&g) {
                        *dst += gv * factor;
                    }
                }
                Op::AddRowBias(a, bias) => {
                    let c = self.nodes[bias.0].value.numel();
                    for (dst, &gv) in adj[a.0].iter_mut().zip(&g) {
                        *dst += gv;
                    }
                    for (idx, &gv) in g.iter().enumerate() {
                        adj[bias.0][idx % c] += gv;
                    }
                }
                Op::Transpose(a) => {
                    let ta = &self.nodes[a.0].value;
                    let (r, c) = (ta.rows(), ta.cols());
                    for ii in 0..r {
                        for j in 0..c {
                            adj[a.0][ii * c + j] += g[j * r + ii];
                        }
                    }
                }
                Op::Gelu(a) => {
                    let ta = self.nodes[a.0].value.data().to_vec();
                    for (idx, &gv) in g.iter().enumerate() {
                        adj[a.0][idx] += gv * gelu_deriv(ta[idx]);
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[i].value.data().to_vec();
                    let c = self.nodes[i].value.cols();
                    for (row_idx, row_g) in g.chunks(c).enumerate() {
                        let row_y = &y[row_idx * c..(row_idx + 1) * c];
                        let dot: f64 = row_g.iter().zip(row_y).map(|(gv, yv)| gv * yv).sum();
                        for j in 0..c {
                            adj[a.0][row_idx * c + j] += row_y[j] * (row_g[j] - dot);
                        }
                    }
                }
                Op::MeanRows(a) => {
                    let r = self.nodes[a.0].value.rows();
                    let c = self.nodes[a.0].value.cols();
                    for ii in 0..r {
                        for j in 0..c {
                            adj[a.0][ii * c + j] += g[j] / r as f64;
                        }
                    }
                }
                Op::Reshape(a) => {
                    for (dst, &gv) in adj[a.0].iter_mut().zip(&g) {
                        *dst += gv;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.numel();
                        for (dst, &gv) in adj[p.0].iter_mut().zip(&g[offset..offset + n]) {
                            *dst += gv;
                        }
                        offset += n;
                    }
                }
                Op::SumAll(a) => {
                    for dst in adj[a.0].iter_mut() {
                        *dst += g[0];
                    }
                }
                Op::WindowMean(a, groups) => {
                    let c = self.nodes[a.0].value.cols();
                    for (q, group) in groups.iter().enumerate() {
                        let n = group.len() as f64;
                        for &idx in group {
                            for j in 0..c {
                                adj[a.0][idx * c + j] += g[q * c + j] / n;
                            }
                        }
                    }
                }
                Op::Conv2dSame { input, weight, h, w } => {
                    let ws = self.nodes[weight.0].value.shape().to_vec();
                    let (k, c_in, c_out) = (ws[0], ws[2], ws[3]);
                    let pad = k / 2;
                    let in_data = self.nodes[input.0].value.data().to_vec();
                    let w_data = self.nodes[weight.0].value.data().to_vec();
                    for y in 0..h {
                        for x in 0..w {
                            for dy in 0..k {
                                let sy = y as isize + dy as isize - pad as isize;
                                if sy < 0 || sy >= h as isize {
                                    continue;
                                }
                                for dx in 0..k {
                                    let sx = x as isize + dx as isize - pad as isize;
                                    if sx < 0 || sx >= w as isize {
                                        continue;
                                    }
                                    let src = (sy as usize * w + sx as usize) * c_in;
                                    let gout = &g[(y * w + x) * c_out..][..c_out];
                                    for ci in 0..c_in {
                                        let widx = ((dy * k + dx) * c_in + ci) * c_out;
                                        let mut din = 0.0;
                                        for co in 0..c_out {
                                            din += w_data[widx + co] * gout[co];
                                            adj[weight.0][widx + co] +=
                                                in_data[src + ci] * gout[co];
                                        }
                                        adj[input.0][src + ci] += din;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::CrossEntropy(logits, labels) => {
                    let tl = &self.nodes[logits.0].value;
                    let (b, k) = (tl.rows(), tl.cols());
                    let scale = g[0] / b as f64;
                    for (ii, &label) in labels.iter().enumerate() {
                        let row = &tl.data()[ii * k..(ii + 1) * k];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
                        for j in 0..k {
                            let p = libm::exp(row[j] - max) / sum;
                            let delta = if j == label { 1.0 } else { 0.0 };
                            adj[logits.0][ii * k + j] += scale * (p - delta);
                        }
                    }
                }
            }
        }

        // fold adjoints into the persistent leaf gradients
        for (node, a) in self.nodes.iter_mut().zip(&adj) {
            if let Some(gbuf) = &mut node.grad {
                for (dst, &gv) in gbuf.iter_mut().zip(a) {
                    *dst += gv;
                }
            }
        }
        Ok(())
    }
}
