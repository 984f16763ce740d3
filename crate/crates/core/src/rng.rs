//! Deterministic, stream-split randomness.
//!
//! Every random draw in a trajectory comes from a `(seed, stream)` pair, where
//! the stream id is derived from the dimension step and a purpose tag. Extending
//! a trajectory from a checkpoint therefore replays identical draws without
//! serializing generator state: step `n` always sees the same stream.
//!
//! Generator: ChaCha8 (documented, counter-based, 2^64 independent streams).
//! Gaussians: Box-Muller in polar form on the generator's uniforms.

use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::C64;

/// Name recorded in run metadata alongside the seed.
pub const GENERATOR_NAME: &str = "chacha8/box-muller";

/// What a stream is used for; part of the stream-id derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Uniform point on a complex unit sphere (matrix mode target vectors).
    Sphere,
    /// Update coefficients sampled directly in the eigenbasis (coefficient mode).
    Coeffs,
    /// Phase redraws for the martingale resampling test.
    PhaseResample,
    /// Anything else; carries its own tag.
    Other(u8),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Sphere => 1,
            Purpose::Coeffs => 2,
            Purpose::PhaseResample => 3,
            Purpose::Other(t) => 0x80 | t as u64,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream id for a given dimension step and purpose.
pub fn stream_id(step: u64, purpose: Purpose) -> u64 {
    splitmix64((step << 8) ^ purpose.tag())
}

/// A seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Stream owned by dimension step `step` of trajectory `seed`.
    pub fn for_step(seed: u64, step: u64, purpose: Purpose) -> Self {
        Self::new(seed, stream_id(step, purpose))
    }

    /// Uniform in (0, 1]; never exactly zero, so `ln` is safe.
    pub fn uniform_open(&mut self) -> f64 {
        1.0 - rand::Rng::gen::<f64>(&mut self.inner)
    }

    /// Standard complex Gaussian with `E|z|^2 = 1`, via Box-Muller:
    /// `z = sqrt(-ln u) exp(2 pi i v)`.
    pub fn standard_complex(&mut self) -> C64 {
        let u = self.uniform_open();
        let v = rand::Rng::gen::<f64>(&mut self.inner);
        C64::from_polar((-u.ln()).sqrt(), crate::TAU * v)
    }

    /// Uniform phase on the unit circle.
    pub fn unit_phase(&mut self) -> C64 {
        C64::from_polar(1.0, crate::TAU * rand::Rng::gen::<f64>(&mut self.inner))
    }

    pub fn gen_range(&mut self, range: std::ops::Range<f64>) -> f64 {
        rand::Rng::gen_range(&mut self.inner, range)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}
