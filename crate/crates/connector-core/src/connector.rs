//! The five connector architectures: linear, two-layer MLP, average
//! pooling, attention pooling (Q-Former style), and convolutional mapping
//! (C-Abstractor style).
//!
//! Each forward pass maps an input of P patch features (P×d_v matrix) to
//! visual tokens. Feature-preserving kinds emit P tokens; feature-compressing
//! kinds emit exactly Q.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{NodeId, Tape};
use crate::error::CoreError;
use crate::geometry::{window_partition, GridShape};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConnectorKind {
    Linear,
    TwoLayerMlp,
    AvgPool,
    AttnPool,
    ConvMap,
}

impl ConnectorKind {
    pub fn is_compressing(&self) -> bool {
        matches!(
            self,
            ConnectorKind::AvgPool | ConnectorKind::AttnPool | ConnectorKind::ConvMap
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConnectorKind::Linear => "linear",
            ConnectorKind::TwoLayerMlp => "mlp",
            ConnectorKind::AvgPool => "avgpool",
            ConnectorKind::AttnPool => "attnpool",
            ConnectorKind::ConvMap => "convmap",
        }
    }

    /// Parse a user-facing name; accepts the common aliases (q-former, c-abstractor).
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ConnectorKind::Linear),
            "mlp" | "two-layer-mlp" | "twolayermlp" => Ok(ConnectorKind::TwoLayerMlp),
            "avgpool" | "average-pooling" | "averagepooling" => Ok(ConnectorKind::AvgPool),
            "attnpool" | "qformer" | "q-former" | "attention-pooling" => Ok(ConnectorKind::AttnPool),
            "convmap" | "cabstractor" | "c-abstractor" | "convolutional-mapping" => {
                Ok(ConnectorKind::ConvMap)
            }
            other => Err(CoreError::Config(format!("unknown connector kind '{other}'"))),
        }
    }
}

/// Which connector to build and at what dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectorSpec {
    pub kind: ConnectorKind,
    /// Input (visual encoder) channel dimension.
    pub d_v: usize,
    /// Output (LLM hidden) dimension.
    pub d_llm: usize,
    /// Compressed token count; required iff the kind is compressing, and
    /// must be a perfect square.
    pub q: Option<usize>,
    /// Cross-attention hidden dim; AttnPool only, defaults to d_v.
    pub d_c: Option<usize>,
    /// Odd convolution kernel size; ConvMap only.
    pub kernel: Option<usize>,
    /// Include bias terms in all projections.
    pub bias: bool,
    pub seed: u64,
}

fn int_sqrt(n: usize) -> Option<usize> {
    let r = libm::sqrt(n as f64) as usize;
    for cand in r.saturating_sub(1)..=r + 1 {
        if cand * cand == n {
            return Some(cand);
        }
    }
    None
}

impl ConnectorSpec {
    pub fn new(kind: ConnectorKind, d_v: usize, d_llm: usize, seed: u64) -> Self {
        ConnectorSpec {
            kind,
            d_v,
            d_llm,
            q: None,
            d_c: None,
            kernel: None,
            bias: true,
            seed,
        }
    }

    pub fn with_tokens(mut self, q: usize) -> Self {
        self.q = Some(q);
        self
    }

    pub fn with_attn_dim(mut self, d_c: usize) -> Self {
        self.d_c = Some(d_c);
        self
    }

    pub fn with_kernel(mut self, kernel: usize) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn attn_dim(&self) -> usize {
        self.d_c.unwrap_or(self.d_v)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.unwrap_or(3)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.d_v == 0 || self.d_llm == 0 {
            return Err(CoreError::Config("dimensions must be positive".into()));
        }
        if self.kind.is_compressing() {
            let q = self.q.ok_or_else(|| {
                CoreError::Config(format!(
                    "connector '{}' compresses and needs a token count Q",
                    self.kind.name()
                ))
            })?;
            if int_sqrt(q).is_none() {
                return Err(CoreError::Config(format!(
                    "compressed token count {q} must be a perfect square"
                )));
            }
        } else if self.q.is_some() {
            return Err(CoreError::Config(format!(
                "connector '{}' preserves token count; Q must not be set",
                self.kind.name()
            )));
        }
        if self.kind == ConnectorKind::ConvMap {
            let k = self.kernel_size();
            if k == 0 || k % 2 == 0 {
                return Err(CoreError::Config(format!(
                    "kernel size {k} must be odd and positive"
                )));
            }
        }
        if self.attn_dim() == 0 {
            return Err(CoreError::Config("d_c must be positive".into()));
        }
        Ok(())
    }

    /// Side length of the pooled token grid (√Q).
    pub fn q_side(&self) -> Result<usize, CoreError> {
        let q = self
            .q
            .ok_or_else(|| CoreError::Config("connector has no compressed token count".into()))?;
        int_sqrt(q).ok_or_else(|| {
            CoreError::Config(format!("token count {q} is not a perfect square"))
        })
    }

    /// Output token count for a given input patch count.
    pub fn output_tokens(&self, patches: usize) -> usize {
        self.q.unwrap_or(patches)
    }
}

/// Named learnable tensors of a connector, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectorParams {
    pub entries: Vec<(String, Tensor)>,
}

impl ConnectorParams {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn total_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Canonical (name, shape) layout for a spec's parameters.
fn param_layout(spec: &ConnectorSpec) -> Result<Vec<(String, Vec<usize>)>, CoreError> {
    spec.validate()?;
    let (d_v, d, d_c) = (spec.d_v, spec.d_llm, spec.attn_dim());
    let mut layout: Vec<(String, Vec<usize>)> = Vec::new();
    let mlp = |layout: &mut Vec<(String, Vec<usize>)>, d_in: usize| {
        layout.push(("w1".into(), vec![d_in, d]));
        if spec.bias {
            layout.push(("b1".into(), vec![d]));
        }
        layout.push(("w2".into(), vec![d, d]));
        if spec.bias {
            layout.push(("b2".into(), vec![d]));
        }
    };
    match spec.kind {
        ConnectorKind::Linear => {
            layout.push(("w".into(), vec![d_v, d]));
            if spec.bias {
                layout.push(("b".into(), vec![d]));
            }
        }
        ConnectorKind::TwoLayerMlp => mlp(&mut layout, d_v),
        ConnectorKind::AvgPool => mlp(&mut layout, d_v),
        ConnectorKind::AttnPool => {
            layout.push(("queries".into(), vec![spec.q.unwrap(), d_c]));
            layout.push(("w_k".into(), vec![d_v, d_c]));
            if spec.bias {
                layout.push(("b_k".into(), vec![d_c]));
            }
            layout.push(("w_v".into(), vec![d_v, d_c]));
            if spec.bias {
                layout.push(("b_v".into(), vec![d_c]));
            }
            mlp(&mut layout, d_c);
        }
        ConnectorKind::ConvMap => {
            let k = spec.kernel_size();
            layout.push(("conv_pre".into(), vec![k, k, d_v, d_v]));
            if spec.bias {
                layout.push(("conv_pre_b".into(), vec![d_v]));
            }
            layout.push(("conv_post".into(), vec![k, k, d_v, d_v]));
            if spec.bias {
                layout.push(("conv_post_b".into(), vec![d_v]));
            }
            layout.push(("proj".into(), vec![d_v, d]));
            if spec.bias {
                layout.push(("proj_b".into(), vec![d]));
            }
        }
    }
    Ok(layout)
}

/// Exact learnable scalar count for a spec.
pub fn param_count(spec: &ConnectorSpec) -> Result<usize, CoreError> {
    Ok(param_layout(spec)?
        .iter()
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum())
}

/// Seeded parameter initialization: weights uniform(−1/√fan_in, 1/√fan_in),
/// biases zero, learnable queries normal(0, 0.02).
pub fn init_params(spec: &ConnectorSpec) -> Result<ConnectorParams, CoreError> {
    let layout = param_layout(spec)?;
    let mut rng = Rng::new(spec.seed);
    let mut entries = Vec::with_capacity(layout.len());
    for (name, shape) in layout {
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = if name.starts_with('b') || name.ends_with("_b") {
            vec![0.0; numel]
        } else if name == "queries" {
            (0..numel).map(|_| 0.02 * rng.normal()).collect()
        } else {
            // fan_in: all leading axes feed one output scalar
            let fan_in: usize = shape[..shape.len() - 1].iter().product();
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            (0..numel).map(|_| rng.uniform_range(-bound, bound)).collect()
        };
        entries.push((name, Tensor::new(shape, data)?));
    }
    Ok(ConnectorParams { entries })
}

/// Parameters registered on a tape as gradient-tracking leaves.
pub struct ParamNodes {
    pub ids: Vec<(String, NodeId)>,
}

impl ParamNodes {
    pub fn register(tape: &mut Tape, params: &ConnectorParams) -> Self {
        let ids = params
            .entries
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t.clone(), true)))
            .collect();
        ParamNodes { ids }
    }

    fn get(&self, name: &str) -> Result<NodeId, CoreError> {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| CoreError::Contract(format!("missing parameter '{name}'")))
    }

    fn maybe(&self, name: &str) -> Option<NodeId> {
        self.ids.iter().find(|(n, _)| n == name).map(|(_, id)| *id)
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.ids.iter().map(|(_, id)| *id).collect()
    }
}

fn check_input(
    tape: &Tape,
    spec: &ConnectorSpec,
    grid: &GridShape,
    input: NodeId,
) -> Result<(), CoreError> {
    let t = tape.value(input);
    if t.rows() != grid.patches() || t.cols() != spec.d_v {
        return Err(CoreError::ShapeMismatch {
            op: "connector forward",
            left: t.shape().to_vec(),
            right: vec![grid.patches(), spec.d_v],
        });
    }
    Ok(())
}

fn add_bias(tape: &mut Tape, x: NodeId, bias: Option<NodeId>) -> Result<NodeId, CoreError> {
    match bias {
        Some(b) => tape.add_row_bias(x, b),
        None => Ok(x),
    }
}

fn mlp_transform(
    tape: &mut Tape,
    params: &ParamNodes,
    x: NodeId,
) -> Result<NodeId, CoreError> {
    let h = tape.matmul(x, params.get("w1")?)?;
    let h = add_bias(tape, h, params.maybe("b1"))?;
    let h = tape.gelu(h)?;
    let out = tape.matmul(h, params.get("w2")?)?;
    add_bias(tape, out, params.maybe("b2"))
}

/// Differentiable forward pass of any connector: (P×d_v) → (tokens×D).
pub fn forward(
    tape: &mut Tape,
    spec: &ConnectorSpec,
    params: &ParamNodes,
    input: NodeId,
    grid: &GridShape,
) -> Result<NodeId, CoreError> {
    spec.validate()?;
    check_input(tape, spec, grid, input)?;
    match spec.kind {
        ConnectorKind::Linear => {
            let x = tape.matmul(input, params.get("w")?)?;
            add_bias(tape, x, params.maybe("b"))
        }
        ConnectorKind::TwoLayerMlp => mlp_transform(tape, params, input),
        ConnectorKind::AvgPool => {
            let groups = window_partition(grid, spec.q_side()?)?;
            let pooled = tape.window_mean(input, &groups)?;
            mlp_transform(tape, params, pooled)
        }
        ConnectorKind::AttnPool => {
            let keys = tape.matmul(input, params.get("w_k")?)?;
            let keys = add_bias(tape, keys, params.maybe("b_k"))?;
            let values = tape.matmul(input, params.get("w_v")?)?;
            let values = add_bias(tape, values, params.maybe("b_v"))?;
            let keys_t = tape.transpose(keys)?;
            // A = softmax(Q·Kᵀ/√d_c); the learnable queries attend unprojected
            let scores = tape.matmul(params.get("queries")?, keys_t)?;
            let scaled = tape.scale(scores, 1.0 / libm::sqrt(spec.attn_dim() as f64))?;
            let attn = tape.softmax_rows(scaled)?;
            let pooled = tape.matmul(attn, values)?;
            mlp_transform(tape, params, pooled)
        }
        ConnectorKind::ConvMap => {
            let pre = tape.conv2d_same(input, params.get("conv_pre")?, grid.height, grid.width)?;
            let pre = add_bias(tape, pre, params.maybe("conv_pre_b"))?;
            let q_side = spec.q_side()?;
            let groups = window_partition(grid, q_side)?;
            let pooled = tape.window_mean(pre, &groups)?;
            let post = tape.conv2d_same(pooled, params.get("conv_post")?, q_side, q_side)?;
            let post = add_bias(tape, post, params.maybe("conv_post_b"))?;
            let x = tape.matmul(post, params.get("proj")?)?;
            add_bias(tape, x, params.maybe("proj_b"))
        }
    }
}

/// Convenience: init params for a spec, run a single forward, return tokens.
pub fn forward_fresh(
    spec: &ConnectorSpec,
    input: &Tensor,
    grid: &GridShape,
) -> Result<Tensor, CoreError> {
    let params = init_params(spec)?;
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, &params);
    let in_id = tape.leaf(input.clone(), false);
    let out = forward(&mut tape, spec, &nodes, in_id, grid)?;
    Ok(tape.value(out).clone())
}
