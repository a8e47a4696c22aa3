//! Named deterministic RNG substreams.
//!
//! Every random choice in the crate flows from a single run seed through a
//! named substream (`nda`, `world`, `stream`, `mc`, ...), so individual
//! components can be varied independently without perturbing the others.
//! Same `(seed, name, index)` always yields the same generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Collapse `(seed, name, index)` into a child seed: FNV-1a over the stream
/// name, splitmix64 over the combined state.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer over the combined state
    let mut z = seed ^ h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for a named substream.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, 0))
}

/// Deterministic generator for the `index`-th member of a named substream
/// family (Monte Carlo shards, per-batch pools, ...).
pub fn substream_indexed(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, index.wrapping_add(1)))
}

/// FNV-1a content hash, used to derive per-batch substream indices from
/// batch bytes so that a batch carries its randomness with it wherever it
/// appears in a stream.
pub fn content_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
