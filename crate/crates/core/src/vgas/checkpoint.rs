//! `OTP1` selector checkpoints.
//!
//! ```text
//! "OTP1" | D u32 | h u32 | heads u32 | mlp_hidden u32 | layers u32
//!        | tensors in canonical order, each weight (in×out, row-major) then bias, f64 LE
//! ```
//!
//! Canonical order: `audio_in`, `video_in`, then per layer `query`, `key`,
//! `value`, `output`, then `score_hidden`, `score_out`.

use std::path::Path;

use super::{param_count, SelectorConfig, SelectorParams};
use crate::error::{Error, Result};
use crate::stream::format::{read_file, to_u32, write_file, Reader};

pub const PARAMS_MAGIC: [u8; 4] = *b"OTP1";

pub fn encode_params(params: &SelectorParams, cfg: &SelectorConfig) -> Result<Vec<u8>> {
    cfg.check()?;
    if params.len() as u64 != param_count(cfg) {
        return Err(Error::Shape(format!(
            "{} parameters do not match config ({})",
            params.len(),
            param_count(cfg)
        )));
    }
    let mut out = Vec::with_capacity(24 + params.len() * 8);
    out.extend_from_slice(&PARAMS_MAGIC);
    for (v, what) in [
        (cfg.dim, "D"),
        (cfg.hidden, "hidden"),
        (cfg.heads, "heads"),
        (cfg.mlp_hidden, "mlp_hidden"),
        (cfg.layers, "layers"),
    ] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    for v in params.flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_params(bytes: &[u8]) -> Result<(SelectorParams, SelectorConfig)> {
    let mut r = Reader::new(bytes);
    r.expect_magic(&PARAMS_MAGIC)?;
    let mut fields = [0usize; 5];
    for f in &mut fields {
        *f = r.u32()? as usize;
    }
    let [dim, hidden, heads, mlp_hidden, layers] = fields;
    let cfg = SelectorConfig {
        dim,
        hidden,
        heads,
        mlp_hidden,
        layers,
    };
    cfg.check().map_err(|e| Error::Format {
        offset: 4,
        message: format!("invalid selector config: {e}"),
    })?;
    let count = param_count(&cfg);
    let needed = count.checked_mul(8).ok_or_else(|| Error::Format {
        offset: 4,
        message: "parameter count overflows".into(),
    })?;
    r.require(needed)?;
    let flat = r.f64_block(count as usize)?;
    r.finish()?;
    let mut params = SelectorParams::zeros(&cfg);
    params.assign_flat(&flat)?;
    Ok((params, cfg))
}

pub fn save_params(
    params: &SelectorParams,
    cfg: &SelectorConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_file(path.as_ref(), &encode_params(params, cfg)?)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(SelectorParams, SelectorConfig)> {
    decode_params(&read_file(path.as_ref())?)
}
