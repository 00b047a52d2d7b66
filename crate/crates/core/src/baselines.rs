//! Comparators for the vision-guided selector.
//!
//! - [`BaselineKind::Random`] keeps uniformly random token subsets of the
//!   same sizes in both frames and the audio, drawn from a per-chunk
//!   sub-stream so results do not depend on chunk order.
//! - [`BaselineKind::AudioOnly`] prunes video as usual but runs the selector
//!   with audio self-attention in place of cross-attention to the pruned
//!   video.
//!
//! Both produce [`CompressedChunk`]s interchangeable with the main pipeline's.

use std::fmt;

use crate::error::Result;
use crate::rng::{Purpose, SeededRng};
use crate::stream::{retained_counts, Chunk, CompressedChunk, CompressionConfig};
use crate::stvp::prune_chunk_video;
use crate::vgas::{forward_audio_only, SelectorConfig, SelectorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Random,
    AudioOnly,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Random => "random",
            BaselineKind::AudioOnly => "audio_only",
        })
    }
}

/// Random subsets of sizes `n̂_p`, `n̂_p`, `n̂_a`, each sorted ascending.
pub fn random_prune(chunk: &Chunk, cfg: &CompressionConfig, seed: u64) -> Result<CompressedChunk> {
    let n_p = chunk.frame1.rows();
    let n_a = chunk.audio.rows();
    let counts = retained_counts(cfg, n_p, n_a);
    let mut rng = SeededRng::indexed(seed, Purpose::RandomPrune, chunk.index as u64);
    let mut draw = |n: usize, k: usize| {
        let mut kept = rng.sample_indices(n, k);
        kept.sort_unstable();
        kept
    };
    let f1 = draw(n_p, counts.per_frame);
    let f2 = draw(n_p, counts.per_frame);
    let audio = draw(n_a, counts.audio);
    CompressedChunk::assemble(chunk, f1, f2, audio)
}

/// Kept audio indices from the selector without video guidance.
pub fn audio_only_select(
    chunk: &Chunk,
    params: &SelectorParams,
    scfg: &SelectorConfig,
    cfg: &CompressionConfig,
) -> Result<Vec<usize>> {
    Ok(forward_audio_only(chunk, params, scfg, cfg)?.kept_audio)
}

/// Saliency-pruned video plus audio-only selection.
pub fn audio_only_compress(
    chunk: &Chunk,
    params: &SelectorParams,
    scfg: &SelectorConfig,
    cfg: &CompressionConfig,
) -> Result<CompressedChunk> {
    let video = prune_chunk_video(chunk, cfg)?;
    let audio = audio_only_select(chunk, params, scfg, cfg)?;
    CompressedChunk::assemble(chunk, video.kept_frame1, video.kept_frame2, audio)
}
