//! Seeded random streams.
//!
//! Every stochastic component draws from its own [`RngStream`], keyed by a
//! 64-bit seed and a stream id, so that adding draws to one component never
//! shifts the sequence seen by another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids used by environments and the realism wrapper.
pub mod streams {
    pub const DYNAMICS: u64 = 0;
    pub const PATIENT: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const MASK: u64 = 3;
    pub const POLICY: u64 = 4;
    pub const TRAINING: u64 = 5;
    pub const REPLAY: u64 = 6;
    pub const INIT: u64 = 7;
    pub const TUNER: u64 = 8;
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child of `base` (episodes of an evaluation seed,
/// trials of a tuning run, ...).
pub fn child_seed(base: u64, index: u64) -> u64 {
    mix64(base ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}
