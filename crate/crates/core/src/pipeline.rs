//! End-to-end chunk compression: video pruning, then vision-guided audio selection.

use crate::error::Result;
use crate::stream::{Chunk, ChunkedStream, CompressedChunk, CompressionConfig};
use crate::stvp::{prune_chunk_video, VideoSelection};
use crate::vgas::{self, SelectorConfig, SelectorOutput, SelectorParams};

#[derive(Debug, Clone)]
pub struct ChunkCompression {
    pub video: VideoSelection,
    pub audio: SelectorOutput,
    pub compressed: CompressedChunk,
}

pub fn compress_chunk(
    chunk: &Chunk,
    params: &SelectorParams,
    scfg: &SelectorConfig,
    ccfg: &CompressionConfig,
) -> Result<ChunkCompression> {
    let video = prune_chunk_video(chunk, ccfg)?;
    let audio = vgas::forward(chunk, &video, params, scfg, ccfg)?;
    let compressed = CompressedChunk::assemble(
        chunk,
        video.kept_frame1.clone(),
        video.kept_frame2.clone(),
        audio.kept_audio.clone(),
    )?;
    Ok(ChunkCompression {
        video,
        audio,
        compressed,
    })
}

/// Compresses every chunk in order.
pub fn compress_stream(
    stream: &ChunkedStream,
    params: &SelectorParams,
    scfg: &SelectorConfig,
    ccfg: &CompressionConfig,
) -> Result<Vec<ChunkCompression>> {
    stream
        .chunks
        .iter()
        .map(|c| compress_chunk(c, params, scfg, ccfg))
        .collect()
}
