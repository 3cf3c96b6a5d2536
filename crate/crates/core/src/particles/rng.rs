//! Counter-based Gaussian streams.
//!
//! Every particle owns a ChaCha8 stream selected by its index under a key
//! derived from the run seed and a purpose tag. Each time step consumes exactly
//! two 64-bit words, so the draw for `(seed, particle, step)` sits at a fixed
//! position of the stream and does not depend on scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Purpose tags that keep independent uses of one seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Increments = 0x9e37_79b9_7f4a_7c15,
    InitialLaw = 0xbf58_476d_1ce4_e5b9,
    Resample = 0x94d0_49bb_1331_11eb,
    Bootstrap = 0xd6e8_feb8_6659_fd93,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a derived run (restarts, bootstrap replicates, Run B of a test).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(0x632b_e59b_d9b4_e019)))
}

#[derive(Debug, Clone)]
pub struct ParticleStream {
    rng: ChaCha8Rng,
}

impl ParticleStream {
    pub fn new(seed: u64, purpose: Purpose, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ purpose as u64));
        rng.set_stream(index);
        Self { rng }
    }

    /// Stream positioned at the draw for `step`.
    pub fn at_step(seed: u64, purpose: Purpose, index: u64, step: u64) -> Self {
        let mut s = Self::new(seed, purpose, index);
        s.rng.set_word_pos(4 * step as u128);
        s
    }

    /// Uniform on `[0, 1)`; consumes one word pair.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        let u = to_unit(self.rng.next_u64());
        let _ = self.rng.next_u64();
        u
    }

    /// Standard normal by Box-Muller; consumes one word pair.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - to_unit(self.rng.next_u64());
        let u2 = to_unit(self.rng.next_u64());
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }
}

#[inline]
fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
