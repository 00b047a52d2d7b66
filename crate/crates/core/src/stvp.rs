//! Spatio-temporal video pruning.
//!
//! Frame 1 tokens are scored by their cosine distance to the frame's mean
//! token (spatial distinctiveness); frame 2 tokens by their cosine distance to
//! the frame 1 token at the same position (temporal change). Each frame then
//! keeps its own top `n̂_p` tokens.

use crate::error::{Error, Result};
use crate::numerics::{cosine_distance, mean_rows, topk_indices, Matrix};
use crate::stream::{retained_counts, Chunk, CompressionConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSaliency {
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSelection {
    pub kept_frame1: Vec<usize>,
    pub kept_frame2: Vec<usize>,
    pub saliency: VideoSaliency,
}

pub fn spatial_saliency(frame1: &Matrix) -> Result<Vec<f64>> {
    let mean = mean_rows(frame1)?;
    frame1
        .row_iter()
        .map(|row| cosine_distance(row, &mean))
        .collect()
}

pub fn temporal_saliency(frame1: &Matrix, frame2: &Matrix) -> Result<Vec<f64>> {
    if frame1.shape() != frame2.shape() {
        return Err(Error::Shape(format!(
            "temporal saliency needs equal frames, got {:?} and {:?}",
            frame1.shape(),
            frame2.shape()
        )));
    }
    frame2
        .row_iter()
        .zip(frame1.row_iter())
        .map(|(now, before)| cosine_distance(now, before))
        .collect()
}

pub fn prune_chunk_video(chunk: &Chunk, cfg: &CompressionConfig) -> Result<VideoSelection> {
    let spatial = spatial_saliency(&chunk.frame1)?;
    let temporal = temporal_saliency(&chunk.frame1, &chunk.frame2)?;
    let keep = retained_counts(cfg, chunk.frame1.rows(), chunk.audio.rows()).per_frame;
    Ok(VideoSelection {
        kept_frame1: topk_indices(&spatial, keep)?,
        kept_frame2: topk_indices(&temporal, keep)?,
        saliency: VideoSaliency { spatial, temporal },
    })
}

impl VideoSelection {
    /// `[kept frame1 rows; kept frame2 rows]`, the visual context for audio selection.
    pub fn pruned_tokens(&self, chunk: &Chunk) -> Result<Matrix> {
        let f1 = chunk.frame1.select_rows(&self.kept_frame1)?;
        let f2 = chunk.frame2.select_rows(&self.kept_frame2)?;
        Matrix::vstack(&[&f1, &f2])
    }
}
