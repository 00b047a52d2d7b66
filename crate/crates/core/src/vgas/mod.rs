//! Vision-guided audio selection.
//!
//! Audio tokens query the pruned video tokens through a small multi-head
//! cross-attention block; a two-layer MLP with a sigmoid turns each
//! context-aware audio token into a saliency score, and a hard top-k keeps
//! the best `n̂_a` audio tokens. Training goes through the top-k with an
//! identity surrogate gradient (see [`Tape::backward_ste`]).

mod checkpoint;
mod forward;
pub mod gradcheck;

pub use checkpoint::{decode_params, encode_params, load_params, save_params, PARAMS_MAGIC};
pub use forward::{
    cross_attend, forward, forward_audio_only, score_tokens, select_audio, self_attend,
    AudioSelection, Guidance, SelectorOutput, Tape,
};

use crate::error::{Error, Result};
use crate::numerics::{matmul, Matrix};
use crate::rng::{Purpose, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorConfig {
    /// Backbone embedding width `D`.
    pub dim: usize,
    /// Internal attention width `h`.
    pub hidden: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub layers: usize,
}

impl SelectorConfig {
    pub fn new(
        dim: usize,
        hidden: usize,
        heads: usize,
        mlp_hidden: usize,
        layers: usize,
    ) -> Result<Self> {
        let cfg = Self {
            dim,
            hidden,
            heads,
            mlp_hidden,
            layers,
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// 512-wide, 8-head, single-layer selector with a 256-unit score head.
    pub fn standard(dim: usize) -> Self {
        Self {
            dim,
            hidden: 512,
            heads: 8,
            mlp_hidden: 256,
            layers: 1,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 || self.mlp_hidden == 0 {
            return Err(Error::Param(format!(
                "selector widths must be positive: {self:?}"
            )));
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Param(format!(
                "hidden = {} is not divisible into {} heads",
                self.hidden, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Param(
                "selector needs at least one attention layer".into(),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Closed-form learnable parameter count.
pub fn param_count(cfg: &SelectorConfig) -> u64 {
    let (d, h, m, l) = (
        cfg.dim as u64,
        cfg.hidden as u64,
        cfg.mlp_hidden as u64,
        cfg.layers as u64,
    );
    2 * (d * h + h) + l * 4 * (h * h + h) + (h * m + m) + (m + 1)
}

/// `y = x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    fn uniform(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_in(-bound, bound)),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = matmul(x, &self.weight)?;
        y.add_row_vector(&self.bias);
        Ok(y)
    }

    pub fn len(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub query: Affine,
    pub key: Affine,
    pub value: Affine,
    pub output: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorParams {
    pub audio_in: Affine,
    pub video_in: Affine,
    pub layers: Vec<AttentionLayer>,
    pub score_hidden: Affine,
    pub score_out: Affine,
}

impl SelectorParams {
    pub fn zeros(cfg: &SelectorConfig) -> Self {
        let h = cfg.hidden;
        Self {
            audio_in: Affine::zeros(cfg.dim, h),
            video_in: Affine::zeros(cfg.dim, h),
            layers: (0..cfg.layers)
                .map(|_| AttentionLayer {
                    query: Affine::zeros(h, h),
                    key: Affine::zeros(h, h),
                    value: Affine::zeros(h, h),
                    output: Affine::zeros(h, h),
                })
                .collect(),
            score_hidden: Affine::zeros(h, cfg.mlp_hidden),
            score_out: Affine::zeros(cfg.mlp_hidden, 1),
        }
    }

    /// Tensors in their canonical order, with stable names.
    pub fn named(&self) -> Vec<(String, &Affine)> {
        let mut out = vec![
            ("audio_in".to_string(), &self.audio_in),
            ("video_in".to_string(), &self.video_in),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.query"), &l.query));
            out.push((format!("layer{i}.key"), &l.key));
            out.push((format!("layer{i}.value"), &l.value));
            out.push((format!("layer{i}.output"), &l.output));
        }
        out.push(("score_hidden".to_string(), &self.score_hidden));
        out.push(("score_out".to_string(), &self.score_out));
        out
    }

    fn affines_mut(&mut self) -> Vec<&mut Affine> {
        let mut out = vec![&mut self.audio_in, &mut self.video_in];
        for l in &mut self.layers {
            out.push(&mut l.query);
            out.push(&mut l.key);
            out.push(&mut l.value);
            out.push(&mut l.output);
        }
        out.push(&mut self.score_hidden);
        out.push(&mut self.score_out);
        out
    }

    pub fn len(&self) -> usize {
        self.named().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All values in canonical order: each tensor's weight (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (_, a) in self.named() {
            out.extend_from_slice(a.weight.as_slice());
            out.extend_from_slice(&a.bias);
        }
        out
    }

    /// Overwrites every value from a flat slice in canonical order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} flat values for {} parameters",
                flat.len(),
                self.len()
            )));
        }
        let mut pos = 0;
        for a in self.affines_mut() {
            let w = a.weight.as_mut_slice();
            w.copy_from_slice(&flat[pos..pos + w.len()]);
            pos += w.len();
            let b = a.bias.len();
            a.bias.copy_from_slice(&flat[pos..pos + b]);
            pos += b;
        }
        Ok(())
    }

    /// `self += scale·other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &SelectorParams, scale: f64) {
        let theirs: Vec<&Affine> = other.named().into_iter().map(|(_, a)| a).collect();
        for (mine, theirs) in self.affines_mut().into_iter().zip(theirs) {
            for (x, y) in mine
                .weight
                .as_mut_slice()
                .iter_mut()
                .zip(theirs.weight.as_slice())
            {
                *x += scale * y;
            }
            for (x, y) in mine.bias.iter_mut().zip(&theirs.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Weights uniform in `±1/√fan_in`, biases zero.
///
/// The video projection starts as a copy of the audio projection and each
/// key map as a copy of its query map, so at initialisation an audio token
/// attends most to the video tokens it resembles. Without this the initial
/// attention is close to uniform and the straight-through signal has little
/// to work with.
pub fn init_params(cfg: &SelectorConfig, seed: u64) -> Result<SelectorParams> {
    cfg.check()?;
    let mut rng = SeededRng::new(seed, Purpose::Init);
    let h = cfg.hidden;
    let audio_in = Affine::uniform(cfg.dim, h, &mut rng);
    let video_in = audio_in.clone();
    let layers = (0..cfg.layers)
        .map(|_| {
            let query = Affine::uniform(h, h, &mut rng);
            AttentionLayer {
                key: query.clone(),
                query,
                value: Affine::uniform(h, h, &mut rng),
                output: Affine::uniform(h, h, &mut rng),
            }
        })
        .collect();
    let score_hidden = Affine::uniform(h, cfg.mlp_hidden, &mut rng);
    let score_out = Affine::uniform(cfg.mlp_hidden, 1, &mut rng);
    Ok(SelectorParams {
        audio_in,
        video_in,
        layers,
        score_hidden,
        score_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameter_budget() {
        let cfg = SelectorConfig::standard(3584);
        assert_eq!(param_count(&cfg), 4_853_249);
        assert!((param_count(&cfg) as f64) < 0.001 * 7.62e9);
    }

    #[test]
    fn tiny_budget_by_hand() {
        let cfg = SelectorConfig::new(4, 2, 1, 2, 1).unwrap();
        assert_eq!(param_count(&cfg), 53);
        assert_eq!(SelectorParams::zeros(&cfg).len(), 53);
    }

    #[test]
    fn extra_layer_cost() {
        let one = SelectorConfig::new(12, 8, 2, 4, 1).unwrap();
        let two = SelectorConfig { layers: 2, ..one };
        assert_eq!(param_count(&two) - param_count(&one), 4 * (64 + 8));
    }

    #[test]
    fn config_validation() {
        assert!(SelectorConfig::new(8, 6, 4, 2, 1).is_err());
        assert!(SelectorConfig::new(8, 8, 0, 2, 1).is_err());
        assert!(SelectorConfig::new(8, 8, 2, 2, 0).is_err());
    }

    #[test]
    fn init_rules() {
        let cfg = SelectorConfig::new(12, 8, 2, 4, 2).unwrap();
        let a = init_params(&cfg, 3).unwrap();
        let b = init_params(&cfg, 3).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert_ne!(a.flatten(), init_params(&cfg, 4).unwrap().flatten());
        assert_eq!(a.len() as u64, param_count(&cfg));
        for (name, t) in a.named() {
            assert!(t.bias.iter().all(|&v| v == 0.0), "{name}");
            let bound = 1.0 / (t.fan_in() as f64).sqrt();
            assert!(
                t.weight.as_slice().iter().all(|w| w.abs() <= bound),
                "{name}"
            );
        }
    }

    #[test]
    fn flat_round_trip() {
        let cfg = SelectorConfig::new(5, 4, 2, 3, 1).unwrap();
        let p = init_params(&cfg, 1).unwrap();
        let mut q = SelectorParams::zeros(&cfg);
        q.assign_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
        assert!(q.assign_flat(&[0.0; 3]).is_err());
    }
}
