//! Seeded random streams.
//!
//! Every source of randomness hangs off a root seed and a stream name:
//! `stream_seed(seed, name)` hashes the name with 64-bit FNV-1a, mixes it
//! with the root seed and runs the result through the SplitMix64 finalizer.
//! Adding a new named stream therefore never shifts the draws of an
//! existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of the named sub-stream of `seed`.
pub fn stream_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a(name.as_bytes()).rotate_left(17))
}

/// Generator for the named sub-stream of `seed`.
pub fn stream(seed: u64, name: &str) -> Rng {
    Rng::seed_from_u64(stream_seed(seed, name))
}
