//! Seed derivation for Monte Carlo sample streams.
//!
//! `derive_seed(master, i) = mix(mix(master) + GOLDEN * (i + 1))` where `mix`
//! is the SplitMix64 finalizer (a bijection on `u64`) and `GOLDEN` is
//! `0x9E37_79B9_7F4A_7C15`. For a fixed master seed the map `i -> seed` is
//! injective, and it uses only wrapping 64-bit integer arithmetic, so every
//! platform derives the same streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(mix(master).wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reserved stream indices for auxiliary randomness (bootstrap resampling,
/// random test functions) that must not collide with sample indices.
pub mod stream {
    pub const BOOTSTRAP: u64 = u64::MAX - 1;
    pub const AUX: u64 = u64::MAX - 2;
}
