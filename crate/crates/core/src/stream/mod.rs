//! Chunked audio-video token streams.
//!
//! A stream is a sequence of chunks. Every chunk carries the tokens of two
//! consecutive video frames (`n_p` tokens each) followed by the synchronized
//! audio tokens (`n_a` of them), all living in a shared embedding space of
//! width `D`.

pub(crate) mod format;
mod synth;

use std::fmt;

pub use format::{
    decode_labels, decode_stream, encode_labels, encode_stream, load_labels, load_stream,
    save_labels, save_stream, LABELS_MAGIC, STREAM_MAGIC,
};
pub use synth::{generate_synthetic, AudioDistractors, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Slack added before flooring `α·n` so that ratios such as `1 - 0.77`
/// (which is `0.22999…` in binary) land on the intended integer.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub index: usize,
    pub frame1: Matrix,
    pub frame2: Matrix,
    pub audio: Matrix,
}

impl Chunk {
    /// `[frame1; frame2; audio]` in interleave order.
    pub fn tokens(&self) -> Matrix {
        Matrix::vstack(&[&self.frame1, &self.frame2, &self.audio])
            .expect("chunk matrices share the embedding width")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedStream {
    pub dim: usize,
    pub tokens_per_frame: usize,
    pub audio_tokens: usize,
    pub chunks: Vec<Chunk>,
}

/// Token-count geometry of a stream, without the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamShape {
    pub chunks: usize,
    pub tokens_per_frame: usize,
    pub audio_tokens: usize,
    pub dim: usize,
}

impl StreamShape {
    pub fn tokens_per_chunk(&self) -> usize {
        2 * self.tokens_per_frame + self.audio_tokens
    }

    pub fn total_tokens(&self) -> usize {
        self.chunks * self.tokens_per_chunk()
    }
}

impl ChunkedStream {
    pub fn shape(&self) -> StreamShape {
        StreamShape {
            chunks: self.chunks.len(),
            tokens_per_frame: self.tokens_per_frame,
            audio_tokens: self.audio_tokens,
            dim: self.dim,
        }
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_stream(self)
    }
}

/// Per-modality compression ratios (fraction of tokens removed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionConfig {
    rho_v: f64,
    rho_a: f64,
    selector_layers: usize,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            rho_v: 0.0,
            rho_a: 0.0,
            selector_layers: 1,
        }
    }
}

impl CompressionConfig {
    pub fn new(rho_v: f64, rho_a: f64) -> Result<Self> {
        Self::with_layers(rho_v, rho_a, 1)
    }

    pub fn with_layers(rho_v: f64, rho_a: f64, selector_layers: usize) -> Result<Self> {
        for (name, rho) in [("rho_v", rho_v), ("rho_a", rho_a)] {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Param(format!("{name} = {rho} is outside [0, 1)")));
            }
        }
        if selector_layers == 0 {
            return Err(Error::Param("selector_layers must be at least 1".into()));
        }
        Ok(Self {
            rho_v,
            rho_a,
            selector_layers,
        })
    }

    /// Builds a config from retention ratios `α = 1 - ρ`.
    pub fn from_retention(alpha_v: f64, alpha_a: f64) -> Result<Self> {
        Self::new(1.0 - alpha_v, 1.0 - alpha_a)
    }

    pub fn rho_v(&self) -> f64 {
        self.rho_v
    }

    pub fn rho_a(&self) -> f64 {
        self.rho_a
    }

    pub fn alpha_v(&self) -> f64 {
        1.0 - self.rho_v
    }

    pub fn alpha_a(&self) -> f64 {
        1.0 - self.rho_a
    }

    pub fn selector_layers(&self) -> usize {
        self.selector_layers
    }
}

/// Kept-token counts per frame and for audio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetainedCounts {
    pub per_frame: usize,
    pub audio: usize,
}

impl RetainedCounts {
    pub fn tokens_per_chunk(&self) -> usize {
        2 * self.per_frame + self.audio
    }
}

fn retain(alpha: f64, n: usize) -> usize {
    let raw = (alpha * n as f64 + ROUNDING_SLACK).floor();
    (raw as usize).clamp(1, n.max(1))
}

/// `max(1, floor(α·n))` for each modality.
pub fn retained_counts(cfg: &CompressionConfig, n_p: usize, n_a: usize) -> RetainedCounts {
    RetainedCounts {
        per_frame: retain(cfg.alpha_v(), n_p),
        audio: retain(cfg.alpha_a(), n_a),
    }
}

/// Share of a chunk's tokens that survive compression.
pub fn realized_retained_ratio(cfg: &CompressionConfig, n_p: usize, n_a: usize) -> f64 {
    let kept = retained_counts(cfg, n_p, n_a).tokens_per_chunk();
    kept as f64 / (2 * n_p + n_a) as f64
}

/// Ground-truth planted token indices for one chunk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChunkLabels {
    pub salient_frame1: Vec<usize>,
    pub salient_frame2: Vec<usize>,
    pub informative_audio: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlantedLabels {
    pub chunks: Vec<ChunkLabels>,
}

impl PlantedLabels {
    /// Checks that labels cover exactly the stream's chunks and index valid rows.
    pub fn check_against(&self, stream: &ChunkedStream) -> Result<()> {
        if self.chunks.len() != stream.chunks.len() {
            return Err(Error::Param(format!(
                "labels cover {} chunks, stream has {}",
                self.chunks.len(),
                stream.chunks.len()
            )));
        }
        for (t, l) in self.chunks.iter().enumerate() {
            let limits = [
                ("salient_frame1", &l.salient_frame1, stream.tokens_per_frame),
                ("salient_frame2", &l.salient_frame2, stream.tokens_per_frame),
                (
                    "informative_audio",
                    &l.informative_audio,
                    stream.audio_tokens,
                ),
            ];
            for (name, set, limit) in limits {
                if let Some(bad) = set.iter().find(|&&i| i >= limit) {
                    return Err(Error::Param(format!(
                        "chunk {t}: {name} index {bad} out of range (< {limit})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A chunk after pruning: kept index lists plus the surviving tokens in
/// `[frame1 kept; frame2 kept; audio kept]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedChunk {
    pub index: usize,
    pub kept_frame1: Vec<usize>,
    pub kept_frame2: Vec<usize>,
    pub kept_audio: Vec<usize>,
    pub tokens: Matrix,
}

fn strictly_increasing(idx: &[usize]) -> bool {
    idx.windows(2).all(|w| w[0] < w[1])
}

impl CompressedChunk {
    pub fn assemble(
        chunk: &Chunk,
        kept_frame1: Vec<usize>,
        kept_frame2: Vec<usize>,
        kept_audio: Vec<usize>,
    ) -> Result<Self> {
        if kept_frame1.len() != kept_frame2.len() {
            return Err(Error::Shape(format!(
                "frames keep {} and {} tokens",
                kept_frame1.len(),
                kept_frame2.len()
            )));
        }
        for (name, idx) in [
            ("frame1", &kept_frame1),
            ("frame2", &kept_frame2),
            ("audio", &kept_audio),
        ] {
            if !strictly_increasing(idx) {
                return Err(Error::Param(format!(
                    "kept {name} indices are not strictly increasing"
                )));
            }
        }
        let f1 = chunk.frame1.select_rows(&kept_frame1)?;
        let f2 = chunk.frame2.select_rows(&kept_frame2)?;
        let a = chunk.audio.select_rows(&kept_audio)?;
        let tokens = Matrix::vstack(&[&f1, &f2, &a])?;
        Ok(Self {
            index: chunk.index,
            kept_frame1,
            kept_frame2,
            kept_audio,
            tokens,
        })
    }

    pub fn kept_per_frame(&self) -> usize {
        self.kept_frame1.len()
    }

    /// The kept tokens as a regular chunk (with `n̂_p`, `n̂_a` rows).
    pub fn to_chunk(&self) -> Chunk {
        let p = self.kept_frame1.len();
        let a = self.kept_audio.len();
        let rows = |start: usize, len: usize| {
            self.tokens
                .select_rows(&(start..start + len).collect::<Vec<_>>())
                .expect("row ranges lie inside the token matrix")
        };
        Chunk {
            index: self.index,
            frame1: rows(0, p),
            frame2: rows(p, p),
            audio: rows(2 * p, a),
        }
    }
}

/// Packs compressed chunks back into a stream. All chunks must share their
/// kept counts, which holds for any single compression config.
pub fn compressed_stream(dim: usize, compressed: &[CompressedChunk]) -> Result<ChunkedStream> {
    let (p, a) = compressed
        .first()
        .map_or((0, 0), |c| (c.kept_per_frame(), c.kept_audio.len()));
    let mut chunks = Vec::with_capacity(compressed.len());
    for c in compressed {
        if c.kept_per_frame() != p || c.kept_audio.len() != a {
            return Err(Error::Shape(format!(
                "chunk {} keeps {}/{} tokens, expected {p}/{a}",
                c.index,
                c.kept_per_frame(),
                c.kept_audio.len()
            )));
        }
        chunks.push(c.to_chunk());
    }
    Ok(ChunkedStream {
        dim,
        tokens_per_frame: p,
        audio_tokens: a,
        chunks,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// `None` for stream-level problems.
    pub chunk: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.chunk {
            Some(t) => write!(f, "chunk {t}: {}: {}", self.field, self.message),
            None => write!(f, "stream: {}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, chunk: Option<usize>, field: &str, message: String) {
        self.violations.push(Violation {
            chunk,
            field: field.to_string(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_stream(s: &ChunkedStream) -> ValidationReport {
    let mut report = ValidationReport::default();
    if s.tokens_per_frame == 0 {
        report.push(None, "tokens_per_frame", "must be at least 1".into());
    }
    if s.audio_tokens == 0 {
        report.push(None, "audio_tokens", "must be at least 1".into());
    }
    if s.dim == 0 {
        report.push(None, "dim", "must be at least 1".into());
    }
    for (pos, chunk) in s.chunks.iter().enumerate() {
        let t = Some(pos);
        if chunk.index != pos {
            report.push(t, "index", format!("expected {pos}, found {}", chunk.index));
        }
        let expected = [
            ("frame1", &chunk.frame1, s.tokens_per_frame),
            ("frame2", &chunk.frame2, s.tokens_per_frame),
            ("audio", &chunk.audio, s.audio_tokens),
        ];
        for (field, m, rows) in expected {
            if m.rows() != rows {
                report.push(
                    t,
                    field,
                    format!("expected {rows} rows, found {}", m.rows()),
                );
            }
            if m.cols() != s.dim {
                report.push(
                    t,
                    field,
                    format!("expected D = {} columns, found {}", s.dim, m.cols()),
                );
            }
            if let Some(pos) = m.as_slice().iter().position(|v| !v.is_finite()) {
                let cols = m.cols().max(1);
                report.push(
                    t,
                    field,
                    format!(
                        "non-finite value at row {}, column {}",
                        pos / cols,
                        pos % cols
                    ),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_stream(k: usize) -> ChunkedStream {
        let chunks = (0..k)
            .map(|t| Chunk {
                index: t,
                frame1: Matrix::from_fn(2, 3, |r, c| (t + r + c) as f64),
                frame2: Matrix::from_fn(2, 3, |r, c| (t * r + c) as f64),
                audio: Matrix::from_fn(4, 3, |r, c| (r as f64) - (c as f64)),
            })
            .collect();
        ChunkedStream {
            dim: 3,
            tokens_per_frame: 2,
            audio_tokens: 4,
            chunks,
        }
    }

    #[test]
    fn retained_count_rules() {
        let half = CompressionConfig::new(0.5, 0.0).unwrap();
        assert_eq!(retained_counts(&half, 4, 7).per_frame, 2);
        // 25% budget ratios from the configuration table.
        let quarter = CompressionConfig::new(0.77, 0.5).unwrap();
        assert_eq!(retained_counts(&quarter, 100, 10).per_frame, 23);
        let tiny = CompressionConfig::new(0.0, 0.99).unwrap();
        assert_eq!(retained_counts(&tiny, 4, 10).audio, 1);
        let full = CompressionConfig::default();
        assert_eq!(
            retained_counts(&full, 9, 5),
            RetainedCounts {
                per_frame: 9,
                audio: 5
            }
        );
    }

    #[test]
    fn config_rejects_out_of_range() {
        assert!(CompressionConfig::new(1.0, 0.0).is_err());
        assert!(CompressionConfig::new(0.0, -0.1).is_err());
        assert!(CompressionConfig::with_layers(0.1, 0.1, 0).is_err());
    }

    #[test]
    fn well_formed_stream_validates() {
        assert!(validate_stream(&tiny_stream(3)).is_ok());
    }

    #[test]
    fn audio_width_defect_is_reported() {
        let mut s = tiny_stream(3);
        s.chunks[1].audio = Matrix::zeros(4, 5);
        let report = validate_stream(&s);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.chunk, Some(1));
        assert_eq!(v.field, "audio");
        assert!(v.message.contains("D = 3"), "{v}");
    }

    #[test]
    fn nan_is_reported() {
        let mut s = tiny_stream(2);
        s.chunks[0].frame2[(1, 2)] = f64::NAN;
        let report = validate_stream(&s);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].chunk, Some(0));
        assert_eq!(report.violations[0].field, "frame2");
    }

    #[test]
    fn misnumbered_chunk_is_reported() {
        let mut s = tiny_stream(2);
        s.chunks[1].index = 5;
        let report = validate_stream(&s);
        assert_eq!(report.violations[0].field, "index");
    }

    #[test]
    fn compressed_chunk_layout() {
        let s = tiny_stream(1);
        let c = CompressedChunk::assemble(&s.chunks[0], vec![1], vec![0], vec![0, 3]).unwrap();
        assert_eq!(c.tokens.rows(), 4);
        assert_eq!(c.tokens.row(0), s.chunks[0].frame1.row(1));
        assert_eq!(c.tokens.row(1), s.chunks[0].frame2.row(0));
        assert_eq!(c.tokens.row(3), s.chunks[0].audio.row(3));
        assert!(CompressedChunk::assemble(&s.chunks[0], vec![1, 0], vec![0, 1], vec![0]).is_err());
        let packed = compressed_stream(3, &[c]).unwrap();
        assert!(validate_stream(&packed).is_ok());
        assert_eq!(packed.tokens_per_frame, 1);
    }
}
