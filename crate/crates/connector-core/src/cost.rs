//! Analytic FLOP and parameter accounting for connector + LLM prefill.
//!
//! The model converts connector choice and image resolution into
//! per-sample multiply-accumulate counts and predicts the relative
//! training-time reduction of swapping a feature-preserving connector for
//! a feature-compressing one. Expected text lengths per training stage are
//! free parameters calibrated once against reported wall-clock reductions
//! at 336/448 and then frozen; 224 is outside the model's validity range
//! because fixed overheads dominate at that scale.

use alloc::format;

use crate::connector::{param_count, ConnectorKind, ConnectorSpec};
use crate::error::CoreError;
use crate::geometry::patch_count;

/// Frozen default: expected text tokens per sample in the pre-training stage.
pub const DEFAULT_TEXT_TOKENS_STAGE1: usize = 60;
/// Frozen default: expected text tokens per sample in the fine-tuning stage.
pub const DEFAULT_TEXT_TOKENS_STAGE2: usize = 700;
/// Default LLM hidden size (7B-class decoder).
pub const DEFAULT_LLM_HIDDEN: usize = 4096;
/// Default LLM depth (7B-class decoder).
pub const DEFAULT_LLM_LAYERS: usize = 32;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub connector: ConnectorSpec,
    /// Square image resolution in pixels.
    pub resolution: usize,
    /// Expected text tokens per sample (stage-dependent).
    pub text_tokens: usize,
    pub llm_hidden: usize,
    pub llm_layers: usize,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.connector.validate()?;
        if self.llm_hidden == 0 || self.llm_layers == 0 {
            return Err(CoreError::Config("LLM dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub connector_flops: u64,
    pub llm_flops: u64,
    pub total_flops: u64,
    pub params: u64,
    pub visual_tokens: usize,
}

/// Per-sample connector cost in multiply-accumulate-style FLOPs.
pub fn connector_flops(spec: &ConnectorSpec, patches: usize) -> Result<u64, CoreError> {
    spec.validate()?;
    let p = patches as u64;
    let d_v = spec.d_v as u64;
    let d = spec.d_llm as u64;
    let q = spec.output_tokens(patches) as u64;
    Ok(match spec.kind {
        ConnectorKind::Linear => 2 * p * d_v * d,
        ConnectorKind::TwoLayerMlp => 2 * p * (d_v * d + d * d),
        // pooling is P·d_v additions, then the MLP runs on Q tokens
        ConnectorKind::AvgPool => p * d_v + 2 * q * (d_v * d + d * d),
        ConnectorKind::AttnPool => {
            let d_c = spec.attn_dim() as u64;
            let kv = 2 * p * d_v * d_c * 2;
            let scores = 2 * q * p * d_c;
            let weighted = 2 * q * p * d_c;
            let transform = 2 * q * (d_c * d + d * d);
            kv + scores + weighted + transform
        }
        ConnectorKind::ConvMap => {
            let k = spec.kernel_size() as u64;
            let pre = 2 * p * k * k * d_v * d_v;
            let pool = p * d_v;
            let post = 2 * q * k * k * d_v * d_v;
            let proj = 2 * q * d_v * d;
            pre + pool + post + proj
        }
    })
}

/// Standard decoder prefill law: L·(4·S²·D + 12·S·D²) with S the full
/// (visual + text) sequence length.
pub fn llm_prefill_flops(visual_tokens: usize, cfg: &PipelineConfig) -> Result<u64, CoreError> {
    cfg.validate()?;
    let s = (visual_tokens + cfg.text_tokens) as u64;
    let d = cfg.llm_hidden as u64;
    let l = cfg.llm_layers as u64;
    Ok(l * (4 * s * s * d + 12 * s * d * d))
}

/// Full per-sample accounting for one pipeline configuration.
pub fn cost_report(cfg: &PipelineConfig) -> Result<CostReport, CoreError> {
    cfg.validate()?;
    let grid = patch_count(cfg.resolution, crate::geometry::DEFAULT_PATCH_SIZE)?;
    let patches = grid.patches();
    let visual_tokens = cfg.connector.output_tokens(patches);
    let conn = connector_flops(&cfg.connector, patches)?;
    let llm = llm_prefill_flops(visual_tokens, cfg)?;
    Ok(CostReport {
        connector_flops: conn,
        llm_flops: llm,
        total_flops: conn + llm,
        params: param_count(&cfg.connector)? as u64,
        visual_tokens,
    })
}

/// Predicted percent reduction in per-sample training cost when replacing
/// `base` with `compressed`. `overhead_flops` is a fixed per-sample cost
/// (encoder + I/O) added to both sides.
pub fn predict_time_reduction(
    base: &PipelineConfig,
    compressed: &PipelineConfig,
    overhead_flops: u64,
) -> Result<f64, CoreError> {
    if base.resolution != compressed.resolution {
        return Err(CoreError::Config(format!(
            "resolutions differ: {} vs {}",
            base.resolution, compressed.resolution
        )));
    }
    if base.llm_hidden != compressed.llm_hidden || base.llm_layers != compressed.llm_layers {
        return Err(CoreError::Config("LLM dimensions differ between configs".into()));
    }
    let b = cost_report(base)?.total_flops + overhead_flops;
    let c = cost_report(compressed)?.total_flops + overhead_flops;
    Ok(100.0 * (1.0 - c as f64 / b as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp_cfg(resolution: usize, text_tokens: usize) -> PipelineConfig {
        PipelineConfig {
            connector: ConnectorSpec::new(ConnectorKind::TwoLayerMlp, 1024, 4096, 0),
            resolution,
            text_tokens,
            llm_hidden: DEFAULT_LLM_HIDDEN,
            llm_layers: DEFAULT_LLM_LAYERS,
        }
    }

    fn compressed_cfg(kind: ConnectorKind, resolution: usize, text_tokens: usize) -> PipelineConfig {
        let mut spec = ConnectorSpec::new(kind, 1024, 4096, 0).with_tokens(144);
        if kind == ConnectorKind::ConvMap {
            spec = spec.with_kernel(3);
        }
        PipelineConfig {
            connector: spec,
            resolution,
            text_tokens,
            llm_hidden: DEFAULT_LLM_HIDDEN,
            llm_layers: DEFAULT_LLM_LAYERS,
        }
    }

    #[test]
    fn linear_flops_formula() {
        let spec = ConnectorSpec::new(ConnectorKind::Linear, 1024, 4096, 0);
        assert_eq!(connector_flops(&spec, 256).unwrap(), 2_147_483_648);
    }

    #[test]
    fn avgpool_pooling_term() {
        // the P·d_v pooling adds alone
        let spec = ConnectorSpec::new(ConnectorKind::AvgPool, 1024, 4096, 0).with_tokens(144);
        let full = connector_flops(&spec, 576).unwrap();
        let mlp_on_q = 2 * 144 * (1024 * 4096 + 4096u64 * 4096);
        assert_eq!(full - mlp_on_q, 589_824);
    }

    #[test]
    fn attnpool_costs_more_than_avgpool_at_matched_dims() {
        let attn = ConnectorSpec::new(ConnectorKind::AttnPool, 1024, 4096, 0)
            .with_tokens(144)
            .with_attn_dim(1024);
        let avg = ConnectorSpec::new(ConnectorKind::AvgPool, 1024, 4096, 0).with_tokens(144);
        assert!(connector_flops(&attn, 1024).unwrap() > connector_flops(&avg, 1024).unwrap());
    }

    #[test]
    fn prefill_zero_visual_tokens_is_text_only() {
        let cfg = mlp_cfg(336, 100);
        let with = llm_prefill_flops(0, &cfg).unwrap();
        let s = 100u64;
        let d = 4096u64;
        assert_eq!(with, 32 * (4 * s * s * d + 12 * s * d * d));
    }

    #[test]
    fn prefill_linear_term_roughly_doubles() {
        // at short sequence lengths the 12·S·D² term dominates
        let cfg = mlp_cfg(336, 0);
        let one = llm_prefill_flops(100, &cfg).unwrap() as f64;
        let two = llm_prefill_flops(200, &cfg).unwrap() as f64;
        let ratio = two / one;
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn token_ratio_arithmetic() {
        let ratio = (144.0 + 60.0) / (1024.0 + 60.0);
        assert!((ratio - 0.188_f64).abs() < 5e-4);
    }

    #[test]
    fn identical_configs_reduce_by_zero() {
        let cfg = mlp_cfg(336, 60);
        assert_eq!(predict_time_reduction(&cfg, &cfg, 0).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_resolutions_rejected() {
        let a = mlp_cfg(336, 60);
        let b = compressed_cfg(ConnectorKind::AvgPool, 448, 60);
        assert!(predict_time_reduction(&a, &b, 0).is_err());
    }

    #[test]
    fn stage_reductions_near_reported_values() {
        // (resolution, stage text tokens, expected percent)
        let cases = [
            (336, DEFAULT_TEXT_TOKENS_STAGE1, 67.0),
            (336, DEFAULT_TEXT_TOKENS_STAGE2, 33.0),
            (448, DEFAULT_TEXT_TOKENS_STAGE1, 80.0),
            (448, DEFAULT_TEXT_TOKENS_STAGE2, 51.0),
        ];
        for (res, text, expected) in cases {
            let base = mlp_cfg(res, text);
            let comp = compressed_cfg(ConnectorKind::ConvMap, res, text);
            let got = predict_time_reduction(&base, &comp, 0).unwrap();
            assert!(
                (got - expected).abs() <= 10.0,
                "res {res} text {text}: predicted {got:.1}%, reported {expected}%"
            );
        }
    }

    #[test]
    fn total_flops_monotone_in_tokens_resolution_text() {
        let base = cost_report(&mlp_cfg(336, 60)).unwrap().total_flops;
        assert!(cost_report(&mlp_cfg(448, 60)).unwrap().total_flops > base);
        assert!(cost_report(&mlp_cfg(336, 120)).unwrap().total_flops > base);
        let fewer = cost_report(&compressed_cfg(ConnectorKind::AvgPool, 336, 60))
            .unwrap()
            .total_flops;
        assert!(fewer < base);
    }

    #[test]
    fn compressed_llm_cost_is_resolution_invariant() {
        let a = cost_report(&compressed_cfg(ConnectorKind::AvgPool, 336, 60)).unwrap();
        let b = cost_report(&compressed_cfg(ConnectorKind::AvgPool, 448, 60)).unwrap();
        assert_eq!(a.llm_flops, b.llm_flops);
    }
}
