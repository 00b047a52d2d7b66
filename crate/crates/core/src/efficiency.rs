//! Analytic FLOPs model for the compressor and a dense transformer backbone.
//!
//! Every multiply-add counts as 2 FLOPs. Softmax, activations, norms and
//! additions of biases other than the score MLP's are not counted. All
//! arithmetic is exact in `u128`.
//!
//! Backbone prefill over `n` tokens:
//!
//! ```text
//! F = L · (8·n·H² + 4·n²·H + 4·n·H·H_ff)
//! ```
//!
//! Selector per chunk, with `n̂_v = 2·n̂_p` kept video tokens:
//!
//! ```text
//!   2·n_a·D·h + 2·n̂_v·D·h                    input projections
//! + layers · ( 4·n_a·h² + 4·n̂_v·h²          Q,O on audio; K,V on video
//!            + 4·n_a·n̂_v·h )                 QKᵀ and attention·V
//! + 2·n_a·(h·m + m)                           score MLP
//! + 4·n_p·D                                   spatial + temporal cosines
//! ```
//!
//! summed over `K` chunks.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::stream::{retained_counts, CompressionConfig, RetainedCounts, StreamShape};
use crate::vgas::SelectorConfig;

/// The cost model in plain text, as printed by `avprune flops`.
pub const CLOSED_FORM: &str = "\
backbone prefill (n tokens): L*(8*n*H^2 + 4*n^2*H + 4*n*H*H_ff)
selector per chunk (nv = 2*kept_per_frame):
  2*n_a*D*h + 2*nv*D*h
  + layers*(4*n_a*h^2 + 4*nv*h^2 + 4*n_a*nv*h)
  + 2*n_a*(h*m + m) + 4*n_p*D
selector total: K * per-chunk";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneSpec {
    pub layers: u64,
    pub hidden: u64,
    pub ffn: u64,
}

impl BackboneSpec {
    /// Feed-forward width defaults to `4·hidden`.
    pub fn new(layers: u64, hidden: u64) -> Result<Self> {
        Self::with_ffn(layers, hidden, 4 * hidden)
    }

    pub fn with_ffn(layers: u64, hidden: u64, ffn: u64) -> Result<Self> {
        if layers == 0 || hidden == 0 || ffn == 0 {
            return Err(Error::Param(format!(
                "backbone layers/hidden/ffn must be positive, got {layers}/{hidden}/{ffn}"
            )));
        }
        Ok(Self {
            layers,
            hidden,
            ffn,
        })
    }

    /// A 7B-class omni backbone: 28 layers, width 3584, FFN 18944.
    pub fn omni_7b() -> Self {
        Self {
            layers: 28,
            hidden: 3584,
            ffn: 18944,
        }
    }
}

pub fn backbone_prefill_flops(spec: &BackboneSpec, n_tokens: u64) -> u128 {
    let (l, h, f, n) = (
        spec.layers as u128,
        spec.hidden as u128,
        spec.ffn as u128,
        n_tokens as u128,
    );
    l * (8 * n * h * h + 4 * n * n * h + 4 * n * h * f)
}

/// Token counts the selector sees in each chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorWorkload {
    pub chunks: u64,
    pub tokens_per_frame: u64,
    pub audio_tokens: u64,
    /// `n̂_v`: kept video tokens over both frames.
    pub kept_video: u64,
}

impl SelectorWorkload {
    pub fn from_counts(shape: &StreamShape, counts: &RetainedCounts) -> Self {
        Self {
            chunks: shape.chunks as u64,
            tokens_per_frame: shape.tokens_per_frame as u64,
            audio_tokens: shape.audio_tokens as u64,
            kept_video: 2 * counts.per_frame as u64,
        }
    }
}

pub fn selector_flops(cfg: &SelectorConfig, w: &SelectorWorkload) -> u128 {
    let d = cfg.dim as u128;
    let h = cfg.hidden as u128;
    let m = cfg.mlp_hidden as u128;
    let layers = cfg.layers as u128;
    let na = w.audio_tokens as u128;
    let nv = w.kept_video as u128;
    let np = w.tokens_per_frame as u128;

    let projections = 2 * na * d * h + 2 * nv * d * h;
    let per_layer = 4 * na * h * h + 4 * nv * h * h + 4 * na * nv * h;
    let mlp = 2 * na * (h * m + m);
    let stvp = 4 * np * d;
    w.chunks as u128 * (projections + layers * per_layer + mlp + stvp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopsReport {
    pub full_tokens: u64,
    pub compressed_tokens: u64,
    pub retained_ratio: f64,
    pub selector_flops: u128,
    pub backbone_flops_full: u128,
    pub backbone_flops_compressed: u128,
    pub total_full: u128,
    pub total_compressed: u128,
}

impl FlopsReport {
    pub const CSV_HEADER: &'static str =
        "retained_ratio,selector_flops,backbone_full,backbone_compressed,total_full,total_compressed";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{},{},{},{},{}",
            self.retained_ratio,
            self.selector_flops,
            self.backbone_flops_full,
            self.backbone_flops_compressed,
            self.total_full,
            self.total_compressed
        )
    }

    pub fn selector_to_backbone(&self) -> f64 {
        self.selector_flops as f64 / self.backbone_flops_compressed as f64
    }
}

pub fn reports_to_csv(reports: &[FlopsReport]) -> String {
    let mut out = String::from(FlopsReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Full vs compressed cost of prefilling a whole stream of `shape`.
pub fn report(
    shape: &StreamShape,
    ccfg: &CompressionConfig,
    scfg: &SelectorConfig,
    spec: &BackboneSpec,
) -> Result<FlopsReport> {
    scfg.check()?;
    if shape.chunks == 0 || shape.tokens_per_frame == 0 || shape.audio_tokens == 0 {
        return Err(Error::Param(format!("empty stream shape {shape:?}")));
    }
    if shape.dim != scfg.dim {
        return Err(Error::Shape(format!(
            "stream dim {} does not match selector dim {}",
            shape.dim, scfg.dim
        )));
    }
    let counts = retained_counts(ccfg, shape.tokens_per_frame, shape.audio_tokens);
    let full_tokens = shape.total_tokens() as u64;
    let compressed_tokens = (shape.chunks * counts.tokens_per_chunk()) as u64;
    let selector = selector_flops(scfg, &SelectorWorkload::from_counts(shape, &counts));
    let full = backbone_prefill_flops(spec, full_tokens);
    let compressed = backbone_prefill_flops(spec, compressed_tokens);
    Ok(FlopsReport {
        full_tokens,
        compressed_tokens,
        retained_ratio: compressed_tokens as f64 / full_tokens as f64,
        selector_flops: selector,
        backbone_flops_full: full,
        backbone_flops_compressed: compressed,
        total_full: full,
        total_compressed: compressed + selector,
    })
}

/// A two-minute stream at omni-7B width: 60 chunks of two 144-token frames
/// and 50 audio tokens.
pub fn omni_7b_shape() -> StreamShape {
    StreamShape {
        chunks: 60,
        tokens_per_frame: 144,
        audio_tokens: 50,
        dim: 3584,
    }
}

/// Full retention, then the 35% (`ρ_a = 0.4, ρ_v = 0.67`) and 25%
/// (`ρ_a = 0.5, ρ_v = 0.77`) budgets.
pub fn budget_presets() -> [(&'static str, CompressionConfig); 3] {
    [
        ("full", CompressionConfig::default()),
        (
            "35%",
            CompressionConfig::new(0.67, 0.4).expect("valid ratios"),
        ),
        (
            "25%",
            CompressionConfig::new(0.77, 0.5).expect("valid ratios"),
        ),
    ]
}
