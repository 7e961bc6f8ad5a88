//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is a
//! pure function of a master seed and a short path of integer labels. Two
//! streams with different paths are statistically independent, and the value
//! of a stream never depends on how many other streams were drawn before it,
//! so trials can run in any order or on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Concrete generator used throughout the crate.
pub type Rng = ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `labels` into `seed`. Order matters: `derive(s, &[1, 2]) != derive(s, &[2, 1])`.
pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(seed), |acc, &l| splitmix64(acc ^ splitmix64(l.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn stream(seed: u64, labels: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(seed, labels))
}

/// Stream labels for the parts of one problem instance.
pub(crate) mod label {
    pub const MATRIX: u64 = 1;
    pub const SIGNAL: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SE_TABLE: u64 = 4;
}
