//! Finite-difference checks of the selector's reverse pass.
//!
//! With the top-k mask frozen, the STE objective is a smooth function of the
//! parameters, `Σ_j m_j·s_j(θ)`, so its central differences must agree with
//! [`Tape::backward_scores`] given `∂L/∂s = m`.

use super::{
    cross_attend, init_params, score_tokens, self_attend, Guidance, SelectorConfig, SelectorParams,
    Tape,
};
use crate::error::Result;
use crate::numerics::{finite_diff_grad, Matrix};
use crate::rng::{Purpose, SeededRng};
use crate::stream::CompressionConfig;

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Denominator floor so that near-zero gradients are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    /// Position in [`SelectorParams::flatten`] order.
    pub index: usize,
    pub tensor: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub guidance: Guidance,
    pub layers: usize,
    pub heads: usize,
    pub entries: Vec<GradEntry>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.rel_error < GRADCHECK_TOLERANCE)
    }
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADCHECK_FLOOR)
}

fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// Micro case: `n_a = 3`, two video anchors, `D = h = 4`, one token dropped.
/// Parameters are redrawn as `0.8·N(0,1)` so that no ReLU sits near its kink
/// by construction of the initialiser.
pub fn frozen_mask_check(
    guidance: Guidance,
    layers: usize,
    heads: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let cfg = SelectorConfig::new(4, 4, heads, 3, layers)?;
    let ccfg = CompressionConfig::from_retention(1.0, 2.0 / 3.0)?;
    let mut rng = SeededRng::indexed(seed, Purpose::Fixtures, (layers * 16 + heads) as u64);
    let mut params = init_params(&cfg, seed)?;
    let flat: Vec<f64> = (0..params.len()).map(|_| 0.8 * rng.normal()).collect();
    params.assign_flat(&flat)?;
    let audio = normal_matrix(&mut rng, 3, 4);
    let video = normal_matrix(&mut rng, 2, 4);

    let mut tape = Tape::new();
    let out = tape.record(guidance, &audio, Some(&video), &params, &cfg, &ccfg)?;
    let frozen: Vec<f64> = out
        .mask
        .iter()
        .map(|&m| if m { 1.0 } else { 0.0 })
        .collect();
    let analytic = tape.backward_scores(&frozen)?.flatten();

    let mut failure = None;
    let objective = |flat: &[f64]| {
        let run = || -> Result<f64> {
            let mut p = params.clone();
            p.assign_flat(flat)?;
            let ctx = match guidance {
                Guidance::Vision => cross_attend(&audio, &video, &p, &cfg)?,
                Guidance::AudioOnly => self_attend(&audio, &p, &cfg)?,
            };
            let s = score_tokens(&ctx, &p)?;
            Ok(s.iter().zip(&frozen).map(|(a, b)| a * b).sum())
        };
        run().unwrap_or_else(|e| {
            failure.get_or_insert(e);
            f64::NAN
        })
    };
    let numeric = finite_diff_grad(objective, &params.flatten(), GRADCHECK_STEP);
    if let Some(e) = failure {
        return Err(e);
    }
    let numeric = numeric?;

    let names = tensor_names(&params);
    let entries = analytic
        .iter()
        .zip(&numeric)
        .enumerate()
        .map(|(index, (&a, &n))| GradEntry {
            index,
            tensor: names[index].clone(),
            analytic: a,
            numeric: n,
            rel_error: rel_error(a, n),
        })
        .collect();
    Ok(GradCheckReport {
        guidance,
        layers,
        heads,
        entries,
    })
}

/// The configurations exercised by the `gradcheck` command.
pub fn standard_checks(seed: u64) -> Result<Vec<GradCheckReport>> {
    [
        (Guidance::Vision, 1, 1),
        (Guidance::Vision, 1, 2),
        (Guidance::Vision, 2, 2),
        (Guidance::AudioOnly, 1, 2),
    ]
    .into_iter()
    .map(|(g, l, h)| frozen_mask_check(g, l, h, seed))
    .collect()
}

/// Gradient norms of the audio and video input projections for
/// `L = ½‖ẑ‖²` through the straight-through path, on the micro case at
/// initialisation with an 8-unit score head. (With only a few ReLU units,
/// some draws switch all of them off for every token and no gradient flows.)
pub fn ste_projection_norms(seed: u64) -> Result<(f64, f64)> {
    let cfg = SelectorConfig::new(4, 4, 1, 8, 1)?;
    let ccfg = CompressionConfig::from_retention(1.0, 2.0 / 3.0)?;
    let mut rng = SeededRng::indexed(seed, Purpose::Fixtures, 0);
    let params = init_params(&cfg, seed)?;
    let audio = normal_matrix(&mut rng, 3, 4);
    let video = normal_matrix(&mut rng, 2, 4);
    let mut tape = Tape::new();
    let out = tape.record(Guidance::Vision, &audio, Some(&video), &params, &cfg, &ccfg)?;
    let g = tape.backward_ste(&out.masked_audio(&audio))?;
    Ok((norm_of(&g, "audio_in"), norm_of(&g, "video_in")))
}

fn norm_of(p: &SelectorParams, name: &str) -> f64 {
    p.named()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, a)| {
            let w = a.weight.frobenius_norm();
            (w * w + a.bias.iter().map(|b| b * b).sum::<f64>()).sqrt()
        })
        .unwrap_or(0.0)
}

fn tensor_names(p: &SelectorParams) -> Vec<String> {
    let mut out = Vec::with_capacity(p.len());
    for (name, a) in p.named() {
        out.extend(std::iter::repeat_n(
            format!("{name}.weight"),
            a.weight.as_slice().len(),
        ));
        out.extend(std::iter::repeat_n(format!("{name}.bias"), a.bias.len()));
    }
    out
}
