//! Seed derivation. Every stochastic operation takes a `u64` seed; nested
//! operations derive child seeds so that, e.g., multi-run training `i` owns a
//! stream that depends only on `(master seed, i)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

/// Generator for `seed`.
pub fn from_seed(seed: u64) -> StreamRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Child seed number `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c909)))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
