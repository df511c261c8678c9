//! Seeded random streams. Every consumer derives its own stream from a run
//! seed plus a tag path, so adding draws in one component never perturbs
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(mix(seed, path))
}

/// Stream tags.
pub mod tag {
    pub const SHAPES: u64 = 1;
    pub const CLOUD: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const RESET: u64 = 4;
    pub const GRASP: u64 = 5;
    pub const CEM: u64 = 6;
    pub const RRT: u64 = 7;
    pub const DEMOS: u64 = 8;
    pub const INIT: u64 = 9;
    pub const ROLLOUT: u64 = 10;
    pub const VALUE_FIT: u64 = 11;
    pub const BC: u64 = 12;
    pub const FVP: u64 = 13;
    pub const EVAL: u64 = 14;
    pub const ACTION: u64 = 15;
}
