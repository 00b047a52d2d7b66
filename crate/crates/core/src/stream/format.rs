//! `OTS1` stream files and `OTL1` label files.
//!
//! ```text
//! OTS1: "OTS1" | K u32 | n_p u32 | n_a u32 | D u32
//!       | K × (frame1 [n_p·D f32] | frame2 [n_p·D f32] | audio [n_a·D f32])
//! OTL1: "OTL1" | K u32
//!       | K × (salient_frame1 list | salient_frame2 list | informative_audio list)
//!       list = count u32 | count × index u32
//! ```
//!
//! All integers and floats are little-endian, no padding. Payloads are stored
//! as 32-bit floats and widened to `f64` on load, so a stream whose values are
//! `f32`-representable (everything the generator emits) round-trips exactly.

use std::path::Path;

use super::{validate_stream, Chunk, ChunkLabels, ChunkedStream, PlantedLabels};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const STREAM_MAGIC: [u8; 4] = *b"OTS1";
pub const LABELS_MAGIC: [u8; 4] = *b"OTL1";

const STREAM_HEADER: usize = 4 + 4 * 4;

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::Truncated {
                offset: self.pos as u64,
                needed: n as u64,
                available: available as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4).map_err(|_| Error::Format {
            offset: 0,
            message: "file shorter than the 4-byte magic".into(),
        })?;
        if got != magic {
            return Err(Error::Format {
                offset: 0,
                message: format!(
                    "bad magic {:02X?}, expected {:02X?} ({})",
                    got,
                    magic,
                    String::from_utf8_lossy(magic)
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn f32_block(&mut self, count: usize) -> Result<Vec<f64>> {
        let b = self.take(count * 4)?;
        Ok(b.chunks_exact(4)
            .map(|w| f32::from_le_bytes(w.try_into().unwrap()) as f64)
            .collect())
    }

    pub(crate) fn f64_block(&mut self, count: usize) -> Result<Vec<f64>> {
        let b = self.take(count * 8)?;
        Ok(b.chunks_exact(8)
            .map(|w| f64::from_le_bytes(w.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Fails if `needed` bytes are not all present, without consuming anything.
    pub(crate) fn require(&self, needed: u64) -> Result<()> {
        let available = self.remaining() as u64;
        if available < needed {
            return Err(Error::Truncated {
                offset: self.pos as u64,
                needed,
                available,
            });
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("{} trailing bytes after payload", self.remaining()),
            });
        }
        Ok(())
    }
}

pub(crate) fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Param(format!("{what} = {value} does not fit in u32")))
}

pub fn encode_stream(s: &ChunkedStream) -> Result<Vec<u8>> {
    let report = validate_stream(s);
    if !report.is_ok() {
        return Err(Error::Param(format!(
            "refusing to encode invalid stream:\n{report}"
        )));
    }
    let per_chunk = (2 * s.tokens_per_frame + s.audio_tokens) * s.dim;
    let mut out = Vec::with_capacity(STREAM_HEADER + s.chunks.len() * per_chunk * 4);
    out.extend_from_slice(&STREAM_MAGIC);
    for (v, what) in [
        (s.chunks.len(), "K"),
        (s.tokens_per_frame, "n_p"),
        (s.audio_tokens, "n_a"),
        (s.dim, "D"),
    ] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    for chunk in &s.chunks {
        for m in [&chunk.frame1, &chunk.frame2, &chunk.audio] {
            for &v in m.as_slice() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_stream(bytes: &[u8]) -> Result<ChunkedStream> {
    let mut r = Reader::new(bytes);
    r.expect_magic(&STREAM_MAGIC)?;
    let k = r.u32()? as u64;
    let n_p = r.u32()? as u64;
    let n_a = r.u32()? as u64;
    let dim = r.u32()? as u64;
    let overflow = || Error::Format {
        offset: 4,
        message: format!(
            "dimensions K={k}, n_p={n_p}, n_a={n_a}, D={dim} overflow the payload size"
        ),
    };
    let floats_per_chunk = n_p
        .checked_mul(2)
        .and_then(|v| v.checked_add(n_a))
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(overflow)?;
    let payload = floats_per_chunk
        .checked_mul(k)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(overflow)?;
    r.require(payload)?;

    let (k, n_p, n_a, dim) = (k as usize, n_p as usize, n_a as usize, dim as usize);
    let mut chunks = Vec::with_capacity(k);
    for index in 0..k {
        let frame1 = Matrix::new(n_p, dim, r.f32_block(n_p * dim)?)?;
        let frame2 = Matrix::new(n_p, dim, r.f32_block(n_p * dim)?)?;
        let audio = Matrix::new(n_a, dim, r.f32_block(n_a * dim)?)?;
        chunks.push(Chunk {
            index,
            frame1,
            frame2,
            audio,
        });
    }
    r.finish()?;
    Ok(ChunkedStream {
        dim,
        tokens_per_frame: n_p,
        audio_tokens: n_a,
        chunks,
    })
}

pub fn encode_labels(labels: &PlantedLabels) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABELS_MAGIC);
    out.extend_from_slice(&to_u32(labels.chunks.len(), "K")?.to_le_bytes());
    for chunk in &labels.chunks {
        for list in [
            &chunk.salient_frame1,
            &chunk.salient_frame2,
            &chunk.informative_audio,
        ] {
            out.extend_from_slice(&to_u32(list.len(), "label count")?.to_le_bytes());
            for &i in list {
                out.extend_from_slice(&to_u32(i, "label index")?.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_labels(bytes: &[u8]) -> Result<PlantedLabels> {
    let mut r = Reader::new(bytes);
    r.expect_magic(&LABELS_MAGIC)?;
    let k = r.u32()? as usize;
    // Every chunk carries at least three count words.
    r.require((k as u64) * 12)?;
    let mut chunks = Vec::with_capacity(k);
    for _ in 0..k {
        let mut lists: [Vec<usize>; 3] = Default::default();
        for list in &mut lists {
            let n = r.u32()? as u64;
            r.require(n * 4)?;
            *list = (0..n)
                .map(|_| r.u32().map(|v| v as usize))
                .collect::<Result<_>>()?;
        }
        let [salient_frame1, salient_frame2, informative_audio] = lists;
        chunks.push(ChunkLabels {
            salient_frame1,
            salient_frame2,
            informative_audio,
        });
    }
    r.finish()?;
    Ok(PlantedLabels { chunks })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_stream(s: &ChunkedStream, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_stream(s)?)
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<ChunkedStream> {
    decode_stream(&read_file(path.as_ref())?)
}

pub fn save_labels(labels: &PlantedLabels, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_labels(labels)?)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<PlantedLabels> {
    decode_labels(&read_file(path.as_ref())?)
}
