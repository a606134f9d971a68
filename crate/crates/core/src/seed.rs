//! Seed derivation helpers.
//!
//! Every generator in the crate is a pure function of a 64-bit seed. Child
//! seeds for sub-streams (pair `i`, iteration `t`, player `k`, ...) are derived
//! with a SplitMix64 finalizer so that neighbouring indices produce unrelated
//! RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used everywhere a reproducible stream is needed.
pub type ArenaRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and a sequence of stream indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> ArenaRng {
    ArenaRng::seed_from_u64(seed)
}
