//! One run seed, many consumers. Every random draw in the crate flows from a
//! named sub-seed so that adding a consumer never perturbs the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::ContentHash;

/// Derives the sub-seed for a named consumer of the run seed.
///
/// Stable across platforms and releases: the label is folded into the seed
/// with the same content hash used for cache keys.
pub fn subseed(seed: u64, label: &str) -> u64 {
    let mut bytes = Vec::with_capacity(8 + label.len());
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(label.as_bytes());
    ContentHash::of_bytes(&bytes).0
}

/// A deterministic generator for the given seed. ChaCha8 produces the same
/// stream on every platform, unlike the std hasher-backed sources.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
