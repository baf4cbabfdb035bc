//! Seed derivation for schedule-independent parallel simulation.
//!
//! Every random task receives a seed that depends only on the master seed and
//! the task's coordinates (scenario, training set, replicate), never on the
//! order in which workers pick up tasks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream identifiers mixed into derived seeds.
pub mod stream {
    pub const N_FIRST: u64 = 1;
    pub const SENSITIVITY: u64 = 2;
    pub const TUNING: u64 = 3;
    pub const SIMULATION: u64 = 4;
    pub const IMPUTATION: u64 = 5;

    pub const DRAW: u64 = 0x10;
    pub const FIT: u64 = 0x11;
    pub const ONE_SHOT: u64 = 0x12;
    pub const REPLICATE: u64 = 0x13;
    pub const FOLDS: u64 = 0x14;
    pub const SAMPLE: u64 = 0x15;
    pub const SET: u64 = 0x16;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `master` with an ordered list of coordinates into a 64-bit seed.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
