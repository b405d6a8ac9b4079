//! Replication-indexed seed derivation.
//!
//! The stream for `(base_seed, replication, label)` is seeded with
//! `mix(mix(mix(base_seed) ^ replication) ^ fnv1a(label))`, where `mix` is
//! the SplitMix64 finalizer and `fnv1a` the 64-bit FNV-1a hash of the label
//! bytes. Seeds depend only on these three values, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Label digest used for the model-pool draw, shared by all policies.
pub const POOL_STREAM_LABEL: &str = "\0model-pool";

/// SplitMix64 output function applied to `x + golden gamma`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn replication_seed(base_seed: u64, replication: u64, label: &str) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ replication) ^ fnv1a64(label.as_bytes()))
}

pub fn replication_rng(base_seed: u64, replication: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replication_seed(base_seed, replication, label))
}
