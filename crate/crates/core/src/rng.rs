//! Seed-derived random streams.
//!
//! The crate uses ChaCha8, a 64-bit-addressable counter-based generator, and
//! never shares a stream between two uses. Each consumer derives its own
//! stream from a master seed plus a label path, so a replicate, a tree, or a
//! scenario can be regenerated in isolation and results are independent of
//! execution order and thread count.
//!
//! The 256-bit ChaCha key encodes `(master, domain, a, b)` injectively (one
//! mixed 64-bit word each) and `c` selects the ChaCha stream counter, so
//! distinct label tuples can never collide.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Top-level label separating unrelated uses of the same master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamDomain {
    /// Synthetic population generation.
    Population = 1,
    /// Response-propensity generation.
    Propensity = 2,
    /// Allocation of units to the nonprobability set.
    Allocation = 3,
    /// Replicate sample draws.
    Sampling = 4,
    /// Model fitting (forest bootstrap and feature subsampling).
    ModelFit = 5,
    /// Per-tree growth inside a forest.
    TreeGrowth = 6,
}

/// SplitMix64 finalizer; a bijection on u64.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the stream identified by `(master, domain, a, b, c)`.
pub fn stream(master: u64, domain: StreamDomain, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let words = [mix(master), mix(domain as u64), mix(a), mix(b)];
    let mut seed = [0u8; 32];
    for (chunk, word) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(c);
    rng
}
