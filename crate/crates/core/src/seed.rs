//! Splittable seed derivation.
//!
//! Every random stream in the pipeline is keyed by a tuple of integers mixed
//! into the master seed, so results never depend on the order in which work is
//! scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `keys` into `seed` one at a time.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(seed ^ GOLDEN), |acc, &k| {
        mix64(
            acc.wrapping_add(GOLDEN)
                .wrapping_add(mix64(k.wrapping_add(GOLDEN))),
        )
    })
}

pub fn rng(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, keys))
}

/// Stream tags so different consumers of the same master seed never collide.
pub mod stream {
    pub const RECORD: u64 = 1;
    pub const LABELS: u64 = 2;
    pub const MACHINE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const FOLDS: u64 = 6;
    pub const KMEANS: u64 = 7;
}
