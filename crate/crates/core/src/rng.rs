//! Seed handling. Every random quantity in the crate is drawn from a
//! ChaCha8 stream whose seed is derived from a master seed and an index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags mixed into derived seeds so different consumers of the same
/// master seed never share a stream.
pub mod stream {
    pub const ITERATION: u64 = 0x6974_6572;
    pub const SAMPLING: u64 = 0x7361_6d70;
    pub const TRAINING: u64 = 0x7472_6169;
    pub const EVAL: u64 = 0x6576_616c;
    pub const OBSERVATION: u64 = 0x6f62_7376;
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `hash(base, index)`: the seed used for the `index`-th child of `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Child seed on a named stream.
pub fn stream_seed(base: u64, stream: u64, index: u64) -> u64 {
    derive_seed(derive_seed(base, stream), index)
}
