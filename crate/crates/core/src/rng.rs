//! Seeded randomness shared by the generator, parameter init, random pruning
//! and the trainer's batch sampler.
//!
//! Every random stream is a ChaCha8 keystream. The 32-byte key is the `u64`
//! seed in little-endian order followed by 24 zero bytes; the ChaCha stream id
//! selects an independent sub-stream per purpose (see [`Purpose`]) so that,
//! for example, initializing parameters never perturbs the data generator.
//! Uniform doubles take the top 53 bits of a `u64` draw; normals use the
//! cosine branch of Box-Muller on two fresh uniforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sub-stream identifiers. The numeric values are part of the on-disk
/// reproducibility contract and must not be renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Synthetic = 1,
    Init = 2,
    RandomPrune = 3,
    Batches = 4,
    Fixtures = 5,
}

pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self::with_stream(seed, purpose as u64)
    }

    /// Sub-stream `(purpose << 32) | index`, used for per-chunk streams.
    pub fn indexed(seed: u64, purpose: Purpose, index: u64) -> Self {
        Self::with_stream(seed, ((purpose as u64) << 32) | (index & 0xFFFF_FFFF))
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi]`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `amount` distinct indices from `0..len`, in draw order.
    pub fn sample_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, len, amount).into_vec()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}
