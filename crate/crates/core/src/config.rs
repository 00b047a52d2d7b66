//! Flat `key = value` run configuration.
//!
//! One entry per line; blank lines and lines starting with `#` are ignored.
//! Keys are a closed set ([`KEYS`]); anything else is rejected with its line
//! number. Later assignments (including `--set` overrides) win.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::efficiency::BackboneSpec;
use crate::error::{Error, Result};
use crate::stream::{AudioDistractors, CompressionConfig, SyntheticSpec};
use crate::trainer::{Optimizer, Readout, TrainConfig};
use crate::vgas::{Guidance, SelectorConfig};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("rho_v", "video compression ratio in [0, 1)"),
    ("rho_a", "audio compression ratio in [0, 1)"),
    ("hidden", "selector attention width h"),
    ("heads", "selector attention heads"),
    ("mlp_hidden", "score head hidden width"),
    ("selector_layers", "cross-attention layers"),
    ("learning_rate", "optimizer step size"),
    ("steps", "optimizer steps"),
    ("batch_chunks", "chunks per step"),
    ("optimizer", "adam | gd"),
    ("clip_norm", "gradient norm cap, or none"),
    ("readout", "calibrated | symmetric"),
    ("readout_gain", "proxy readout logit gap"),
    ("guidance", "vision | audio_only"),
    ("backbone_layers", "backbone transformer layers"),
    ("backbone_hidden", "backbone width H"),
    ("backbone_ffn", "backbone feed-forward width (default 4H)"),
    ("chunks", "synthetic chunk count K"),
    ("tokens_per_frame", "synthetic n_p"),
    ("audio_tokens", "synthetic n_a"),
    ("dim", "token width D"),
    ("salient_spatial", "planted salient tokens per frame"),
    ("moving_temporal", "planted moving tokens per chunk"),
    (
        "informative_audio",
        "planted informative audio tokens per chunk",
    ),
    ("margin", "planted signal norm"),
    ("noise", "noise norm"),
    ("distractors", "isotropic | decoy"),
    ("scene_seed", "seed of the shared background direction"),
    ("stream", "input stream path (OTS1)"),
    ("labels", "planted labels path (OTL1)"),
    ("holdout_stream", "held-out stream path (OTS1)"),
    ("holdout_labels", "held-out labels path (OTL1)"),
    ("params", "selector checkpoint path (OTP1)"),
    ("audio_params", "audio-only selector checkpoint path (OTP1)"),
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    i + 1
                ))
            })?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), strip(e))))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        if value.is_empty() {
            return Err(Error::Config(format!("empty value for {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn require(&self, keys: &[&str]) -> Result<()> {
        let missing: Vec<&str> = keys.iter().copied().filter(|k| !self.contains(k)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "missing required keys: {}",
                missing.join(", ")
            )))
        }
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key} = {v:?} is not a valid value"))),
        }
    }

    pub fn compression(&self) -> Result<CompressionConfig> {
        CompressionConfig::with_layers(
            self.parsed("rho_v", 0.0)?,
            self.parsed("rho_a", 0.0)?,
            self.parsed("selector_layers", 1)?,
        )
    }

    /// Selector shape for tokens of width `dim`. Unset fields default to a
    /// small desk-scale selector.
    pub fn selector(&self, dim: usize) -> Result<SelectorConfig> {
        SelectorConfig::new(
            dim,
            self.parsed("hidden", 64)?,
            self.parsed("heads", 2)?,
            self.parsed("mlp_hidden", 16)?,
            self.parsed("selector_layers", 1)?,
        )
    }

    pub fn train(&self, seed: u64) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let optimizer = match self.get("optimizer") {
            None | Some("adam") => Optimizer::adam(),
            Some("gd") => Optimizer::GradientDescent,
            Some(v) => {
                return Err(Error::Config(format!(
                    "optimizer = {v:?}, expected adam or gd"
                )))
            }
        };
        let clip_norm = match self.get("clip_norm") {
            None | Some("none") => None,
            Some(_) => Some(self.parsed("clip_norm", 0.0)?),
        };
        let readout = match self.get("readout") {
            None | Some("calibrated") => Readout::Calibrated,
            Some("symmetric") => Readout::Symmetric,
            Some(v) => {
                return Err(Error::Config(format!(
                    "readout = {v:?}, expected calibrated or symmetric"
                )))
            }
        };
        let cfg = TrainConfig {
            learning_rate: self.parsed("learning_rate", d.learning_rate)?,
            steps: self.parsed("steps", d.steps)?,
            batch_chunks: self.parsed("batch_chunks", d.batch_chunks)?,
            seed,
            optimizer,
            clip_norm,
            readout_gain: self.parsed("readout_gain", d.readout_gain)?,
            readout,
            guidance: self.guidance()?,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn guidance(&self) -> Result<Guidance> {
        match self.get("guidance") {
            None | Some("vision") => Ok(Guidance::Vision),
            Some("audio_only") => Ok(Guidance::AudioOnly),
            Some(v) => Err(Error::Config(format!(
                "guidance = {v:?}, expected vision or audio_only"
            ))),
        }
    }

    pub fn backbone(&self) -> Result<BackboneSpec> {
        let d = BackboneSpec::omni_7b();
        let layers = self.parsed("backbone_layers", d.layers)?;
        let hidden = self.parsed("backbone_hidden", d.hidden)?;
        match self.get("backbone_ffn") {
            Some(_) => BackboneSpec::with_ffn(layers, hidden, self.parsed("backbone_ffn", 0)?),
            None if self.contains("backbone_hidden") => BackboneSpec::new(layers, hidden),
            None => BackboneSpec::with_ffn(layers, hidden, d.ffn),
        }
    }

    pub fn synthetic(&self) -> Result<SyntheticSpec> {
        let d = SyntheticSpec::default();
        let distractors = match self.get("distractors") {
            None => d.distractors,
            Some("isotropic") => AudioDistractors::Isotropic,
            Some("decoy") => AudioDistractors::Decoy,
            Some(v) => {
                return Err(Error::Config(format!(
                    "distractors = {v:?}, expected isotropic or decoy"
                )))
            }
        };
        Ok(SyntheticSpec {
            chunks: self.parsed("chunks", d.chunks)?,
            tokens_per_frame: self.parsed("tokens_per_frame", d.tokens_per_frame)?,
            audio_tokens: self.parsed("audio_tokens", d.audio_tokens)?,
            dim: self.parsed("dim", d.dim)?,
            salient_spatial: self.parsed("salient_spatial", d.salient_spatial)?,
            moving_temporal: self.parsed("moving_temporal", d.moving_temporal)?,
            informative_audio: self.parsed("informative_audio", d.informative_audio)?,
            margin: self.parsed("margin", d.margin)?,
            noise: self.parsed("noise", d.noise)?,
            distractors,
            scene_seed: self.parsed("scene_seed", d.scene_seed)?,
        })
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
