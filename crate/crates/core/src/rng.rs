//! Seed derivation and random streams.
//!
//! Every stochastic component draws from [`Stream`], a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng`). Child seeds are derived from a parent seed and
//! a list of integer tags with a SplitMix64 mixing chain, so each
//! (run, iteration, opponent, game) tuple owns an independent stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Tags separating the purposes a seed is derived for.
pub mod tag {
    pub const CARDSET: u64 = 0x43_41_52_44;
    pub const SUITE: u64 = 0x53_55_49_54;
    pub const GAME: u64 = 0x47_41_4d_45;
    pub const SHUFFLE_A: u64 = 0x53_48_46_41;
    pub const SHUFFLE_B: u64 = 0x53_48_46_42;
    pub const MAP_ELITES: u64 = 0x4d_41_50_45;
    pub const CANDIDATE: u64 = 0x43_41_4e_44;
    pub const GROUND_TRUTH: u64 = 0x47_54_52_55;
    pub const INNER: u64 = 0x49_4e_4e_52;
    pub const TRAIN: u64 = 0x54_52_4e_53;
    pub const INIT: u64 = 0x49_4e_49_54;
    pub const PRETRAIN: u64 = 0x50_52_45_54;
    pub const HOLDOUT: u64 = 0x48_4f_4c_44;
    pub const TRIAL: u64 = 0x54_52_49_41;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and an ordered list of tags.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_stream(base: u64, parts: &[u64]) -> Stream {
    stream(derive_seed(base, parts))
}
