//! Seeded random streams.
//!
//! All randomness in the crate flows from a single root seed through named
//! substreams, so each pipeline stage can be reproduced in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic RNG seeded directly from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent substream from a root seed and a stream name.
///
/// The derivation hashes `(root_seed, name)` so distinct names yield
/// statistically independent streams regardless of the root seed.
pub fn substream(root_seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(substream_seed(root_seed, name))
}

/// Numbered variant of [`substream`], for per-chunk or per-tree streams.
pub fn substream_indexed(root_seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize()[..32].try_into().unwrap())
}

fn substream_seed(root_seed: u64, name: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.finalize()[..32].try_into().unwrap()
}

/// Deterministic structural perturbation of an integer-encoded vector,
/// in [-1, 1].
///
/// Each (position, value) pair hashes to a stable signed offset, and the
/// perturbation is the mean over positions. Making the offsets positional
/// rather than hashing the whole vector at once gives every choice a
/// consistent, additive effect — structure a regressor can learn — instead
/// of per-point white noise. Fixed to SHA-256 rather than the platform
/// hasher so values agree across platforms and runs.
pub fn structural_noise(seed: u64, values: &[u32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update((i as u64).to_le_bytes());
        hasher.update(v.to_le_bytes());
        let digest = hasher.finalize();
        let word = u64::from_le_bytes(digest[..8].try_into().unwrap());
        sum += (word as f64 / u64::MAX as f64) * 2.0 - 1.0;
    }
    sum / values.len() as f64
}
