//! Derivation of independent RNG streams from one root seed.
//!
//! `derive(root, stream)` mixes the pair with SplitMix64, so the split,
//! initialization and per-epoch shuffles of one experiment are reproducible
//! from a single integer without sharing RNG state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;
pub const STREAM_GRADCHECK: u64 = 4;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(root: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(root) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn rng(root: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, stream))
}
