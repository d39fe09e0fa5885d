//! Seed derivation helpers. Every random decision in the engine flows from a
//! user seed through these, so runs replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64-style mixing of two seed words.
pub fn mix64(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a string, for deriving per-question seeds.
pub fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
        })
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
