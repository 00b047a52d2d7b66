//! Modality-asymmetric token compression for chunked audio-video streams.
//!
//! Video tokens are pruned first, per chunk, by spatial and temporal
//! saliency ([`stvp`]). The surviving video tokens then guide a small
//! cross-attention selector that scores and keeps the most relevant audio
//! tokens ([`vgas`]). The selector is trained through its hard top-k with a
//! straight-through estimator ([`trainer`]); [`baselines`] provides the
//! random and audio-only comparators and [`efficiency`] an analytic FLOPs
//! model.

pub mod error;
pub mod numerics;
pub mod rng;
pub mod stream;
pub mod stvp;
pub mod vgas;

pub mod baselines;
pub mod cli;
pub mod config;
pub mod efficiency;
pub mod pipeline;
pub mod trainer;

pub use error::{Error, Result};
