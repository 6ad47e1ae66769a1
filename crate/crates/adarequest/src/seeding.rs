//! Deterministic RNG substreams.
//!
//! Every source of randomness in the crate flows from one master seed
//! through named substreams, so re-running any command with the same
//! config reproduces identical bytes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes; stable across platforms and versions.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// splitmix64 finalizer, mixes the master seed with a label hash.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives an independent substream for `label` under `master`.
pub fn substream(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master ^ fnv1a(label.as_bytes())))
}

/// Derives an indexed substream, e.g. one per user or per sweep cell.
pub fn substream_indexed(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(
        mix(master ^ fnv1a(label.as_bytes())).wrapping_add(index),
    ))
}
