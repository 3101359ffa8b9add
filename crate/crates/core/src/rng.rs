//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a root seed plus a stream label, so parallel and serial runs draw
//! identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix(seed), |acc, &l| mix(acc ^ mix(l)))
}

pub fn stream(seed: u64, labels: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, labels))
}

pub mod label {
    pub const PSO: u64 = 1;
    pub const SVM: u64 = 2;
    pub const NEGATIVES: u64 = 3;
    pub const FOREST: u64 = 4;
    pub const DELTA: u64 = 5;
    pub const FORWARD: u64 = 6;
    pub const BACKWARD: u64 = 7;
    pub const GAP: u64 = 8;
    pub const SCENE: u64 = 9;
    pub const REVIEW: u64 = 10;
    pub const CHUNK: u64 = 11;
}
