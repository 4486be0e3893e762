//! Deterministic randomness.
//!
//! Every random draw in the crate goes through [`SeededRng`], a PCG-64
//! (`Lcg128Xsl64`, 128-bit state, XSL-RR output) generator from `rand_pcg`.
//! The generator is seeded from a `u64` through `SeedableRng::seed_from_u64`,
//! so a given seed yields the same stream on every platform.
//!
//! Parallel work never shares a generator. Instead each worker derives a
//! child stream with [`SeededRng::child`], whose seed is a SplitMix64 hash of
//! the parent seed and the child index.

use std::convert::Infallible;

use rand::{SeedableRng, TryRng};
use rand_pcg::Pcg64;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: Pcg64,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Pcg64::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream `i` derived from this generator's seed.
    ///
    /// Depends only on the seed, not on how many values have been drawn.
    pub fn child(&self, i: u64) -> SeededRng {
        SeededRng::new(mix64(self.seed ^ mix64(i.wrapping_add(1))))
    }
}

impl TryRng for SeededRng {
    type Error = Infallible;

    fn try_next_u32(&mut self) -> Result<u32, Infallible> {
        self.inner.try_next_u32()
    }

    fn try_next_u64(&mut self) -> Result<u64, Infallible> {
        self.inner.try_next_u64()
    }

    fn try_fill_bytes(&mut self, dst: &mut [u8]) -> Result<(), Infallible> {
        self.inner.try_fill_bytes(dst)
    }
}
