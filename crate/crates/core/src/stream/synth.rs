//! Planted-saliency synthetic streams.
//!
//! One unit direction `b` plays the role of the static background. It is
//! drawn from `scene_seed` rather than the stream seed, so streams generated
//! with different seeds share a scene and a selector trained on one
//! generalizes to another. Per chunk:
//!
//! * frame 1: background tokens are `b + η`; planted salient tokens are
//!   `margin·u + η` with `u` a random unit direction orthogonal to `b`.
//! * frame 2: a copy of frame 1, except planted moving tokens, which are
//!   replaced by a vector of the same norm orthogonal to both their frame 1
//!   counterpart and `b`.
//! * audio: informative tokens are `margin·u* + η` where `u*` is the direction
//!   of the chunk's first planted salient frame 1 token (the visual anchor).
//!   The rest follow [`AudioDistractors`]: plain noise `η`, or decoy groups
//!   `margin·d + η` along directions `d` orthogonal to `b` and to every
//!   planted video direction of the chunk, so they match nothing in the
//!   video. Decoys make the audio alone uninformative about which group
//!   matters.
//!
//! `η` is isotropic Gaussian noise with per-component standard deviation
//! `noise / √D`, so its expected norm is about `noise`. Every emitted value is
//! rounded to `f32` so streams survive an `OTS1` round trip bit-exactly.

use super::{Chunk, ChunkLabels, ChunkedStream, PlantedLabels};
use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix};
use crate::rng::{Purpose, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AudioDistractors {
    Isotropic,
    /// Groups of `informative_audio` tokens (the last may be smaller), each
    /// sharing its own decoy direction.
    Decoy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub chunks: usize,
    pub tokens_per_frame: usize,
    pub audio_tokens: usize,
    pub dim: usize,
    pub salient_spatial: usize,
    pub moving_temporal: usize,
    pub informative_audio: usize,
    pub margin: f64,
    pub noise: f64,
    pub distractors: AudioDistractors,
    pub scene_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            chunks: 8,
            tokens_per_frame: 16,
            audio_tokens: 16,
            dim: 16,
            salient_spatial: 3,
            moving_temporal: 3,
            informative_audio: 4,
            margin: 1.0,
            noise: 0.1,
            distractors: AudioDistractors::Isotropic,
            scene_seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Param(msg));
        if self.chunks == 0 || self.tokens_per_frame == 0 || self.audio_tokens == 0 {
            return fail("chunks, tokens_per_frame and audio_tokens must be at least 1".into());
        }
        if self.dim < 3 {
            return fail(format!(
                "dim = {} leaves no room for orthogonal directions",
                self.dim
            ));
        }
        if self.salient_spatial > self.tokens_per_frame {
            return fail(format!(
                "salient_spatial = {} exceeds tokens_per_frame = {}",
                self.salient_spatial, self.tokens_per_frame
            ));
        }
        if self.moving_temporal > self.tokens_per_frame {
            return fail(format!(
                "moving_temporal = {} exceeds tokens_per_frame = {}",
                self.moving_temporal, self.tokens_per_frame
            ));
        }
        if self.informative_audio > self.audio_tokens {
            return fail(format!(
                "informative_audio = {} exceeds audio_tokens = {}",
                self.informative_audio, self.audio_tokens
            ));
        }
        if self.distractors == AudioDistractors::Decoy {
            if self.informative_audio == 0 {
                return fail(
                    "decoy distractors need informative_audio ≥ 1 to size the groups".into(),
                );
            }
            if self.dim <= 1 + self.salient_spatial + self.moving_temporal {
                return fail(format!(
                    "decoy distractors need dim > 1 + salient_spatial + moving_temporal, got dim = {}",
                    self.dim
                ));
            }
        }
        if self.informative_audio > 0 && self.salient_spatial == 0 {
            return fail("informative audio needs at least one salient video anchor".into());
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return fail(format!("margin = {} must be positive", self.margin));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise = {} must be non-negative", self.noise));
        }
        Ok(())
    }
}

fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

fn gaussian(rng: &mut SeededRng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.normal()).collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}

/// Random unit vector orthogonal to every vector in `against`, which must be
/// orthonormal.
fn orthogonal_direction(rng: &mut SeededRng, dim: usize, against: &[&[f64]]) -> Vec<f64> {
    loop {
        let mut v = gaussian(rng, dim, 1.0);
        for a in against {
            let p = dot(&v, a);
            for (x, y) in v.iter_mut().zip(a.iter()) {
                *x -= p * y;
            }
        }
        if norm(&v) > 1e-6 {
            return normalize(v);
        }
    }
}

/// Extends the orthonormal `basis` with the normalized component of `v`
/// orthogonal to it (skipped when negligible).
fn extend_basis(basis: &mut Vec<Vec<f64>>, v: &[f64]) {
    let mut r = v.to_vec();
    for _ in 0..2 {
        for e in basis.iter() {
            let p = dot(&r, e);
            for (x, y) in r.iter_mut().zip(e) {
                *x -= p * y;
            }
        }
    }
    if norm(&r) > 1e-9 * norm(v).max(1.0) {
        basis.push(normalize(r));
    }
}

fn sorted_sample(rng: &mut SeededRng, len: usize, amount: usize) -> Vec<usize> {
    let mut idx = rng.sample_indices(len, amount);
    idx.sort_unstable();
    idx
}

/// Deterministic stream plus its planted ground truth.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(ChunkedStream, PlantedLabels)> {
    spec.check()?;
    let d = spec.dim;
    let eta = spec.noise / (d as f64).sqrt();
    let base = normalize(gaussian(
        &mut SeededRng::indexed(spec.scene_seed, Purpose::Synthetic, 0),
        d,
        1.0,
    ));
    let mut rng = SeededRng::new(seed, Purpose::Synthetic);

    let mut chunks = Vec::with_capacity(spec.chunks);
    let mut labels = Vec::with_capacity(spec.chunks);
    for index in 0..spec.chunks {
        let salient = sorted_sample(&mut rng, spec.tokens_per_frame, spec.salient_spatial);
        let moving = sorted_sample(&mut rng, spec.tokens_per_frame, spec.moving_temporal);
        let informative = sorted_sample(&mut rng, spec.audio_tokens, spec.informative_audio);

        let mut frame1 = Matrix::zeros(spec.tokens_per_frame, d);
        let mut anchor: Option<Vec<f64>> = None;
        let mut planted = vec![base.clone()];
        for i in 0..spec.tokens_per_frame {
            let mut row = gaussian(&mut rng, d, eta);
            if salient.binary_search(&i).is_ok() {
                let u = orthogonal_direction(&mut rng, d, &[&base]);
                for (x, ui) in row.iter_mut().zip(&u) {
                    *x += spec.margin * ui;
                }
                extend_basis(&mut planted, &u);
                anchor.get_or_insert(u);
            } else {
                for (x, bi) in row.iter_mut().zip(&base) {
                    *x += bi;
                }
            }
            for (dst, v) in frame1.row_mut(i).iter_mut().zip(row) {
                *dst = quantize(v);
            }
        }

        let mut frame2 = frame1.clone();
        for &i in &moving {
            let current = frame1.row(i).to_vec();
            let len = norm(&current);
            let dir = normalize(current);
            let mut local = vec![base.clone()];
            extend_basis(&mut local, &dir);
            let against: Vec<&[f64]> = local.iter().map(Vec::as_slice).collect();
            let w = orthogonal_direction(&mut rng, d, &against);
            extend_basis(&mut planted, &w);
            for (dst, wi) in frame2.row_mut(i).iter_mut().zip(&w) {
                *dst = quantize(len * wi);
            }
        }

        let along = |rng: &mut SeededRng, dir: &[f64]| -> Vec<f64> {
            gaussian(rng, d, eta)
                .into_iter()
                .zip(dir)
                .map(|(n, x)| spec.margin * x + n)
                .collect()
        };
        let mut audio = Matrix::zeros(spec.audio_tokens, d);
        let mut decoy: Option<Vec<f64>> = None;
        let mut decoy_left = 0;
        for j in 0..spec.audio_tokens {
            let row: Vec<f64> = if informative.binary_search(&j).is_ok() {
                along(&mut rng, anchor.as_ref().expect("checked: anchor exists"))
            } else {
                match spec.distractors {
                    AudioDistractors::Isotropic => gaussian(&mut rng, d, eta),
                    AudioDistractors::Decoy => {
                        if decoy_left == 0 {
                            let against: Vec<&[f64]> = planted.iter().map(Vec::as_slice).collect();
                            decoy = Some(orthogonal_direction(&mut rng, d, &against));
                            decoy_left = spec.informative_audio;
                        }
                        decoy_left -= 1;
                        along(&mut rng, decoy.as_ref().expect("set above"))
                    }
                }
            };
            for (dst, v) in audio.row_mut(j).iter_mut().zip(row) {
                *dst = quantize(v);
            }
        }

        chunks.push(Chunk {
            index,
            frame1,
            frame2,
            audio,
        });
        labels.push(ChunkLabels {
            salient_frame1: salient,
            salient_frame2: moving,
            informative_audio: informative,
        });
    }

    let stream = ChunkedStream {
        dim: d,
        tokens_per_frame: spec.tokens_per_frame,
        audio_tokens: spec.audio_tokens,
        chunks,
    };
    Ok((stream, PlantedLabels { chunks: labels }))
}
