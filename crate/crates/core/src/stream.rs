//! Deterministic RNG substreams.
//!
//! Each substream is seeded by folding a tuple of integers through SplitMix64,
//! so generation order and thread scheduling never affect the draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hashes `seed` together with `parts` into a 64-bit substream key.
pub fn substream_key(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed), |h, &p| {
        splitmix64(h ^ splitmix64(p.wrapping_add(0xA076_1D64_78BD_642F)))
    })
}

pub fn substream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_key(seed, parts))
}
