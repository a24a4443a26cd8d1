//! Seed streams.
//!
//! Every stochastic component receives its own generator derived from a run
//! seed, a tag naming the consumer, and an index. Streams with different
//! `(seed, tag, index)` triples share no state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeedRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derive a 64-bit sub-seed.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(tag)).wrapping_add(splitmix64(index)))
}

/// A fresh generator for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: &str, index: u64) -> SeedRng {
    SeedRng::seed_from_u64(derive_seed(seed, tag, index))
}
