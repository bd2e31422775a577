//! Deterministic seed derivation.
//!
//! Every run hangs off one global seed. Each pipeline stage derives its
//! own generator as `ChaCha12(global_seed ^ fnv1a64(stage_name))`, so
//! stages can be re-run independently without disturbing each other.
//! Per-item generators reuse the stage seed with the item index as the
//! ChaCha stream number.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a 64-bit hash; tiny, stable, and good enough to separate stage
/// names.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Generator for a named pipeline stage.
pub fn stage_rng(global_seed: u64, stage: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(global_seed ^ fnv1a64(stage.as_bytes()))
}

/// Generator for one item within a stage; independent per index.
pub fn item_rng(global_seed: u64, stage: &str, index: u64) -> ChaCha12Rng {
    let mut rng = stage_rng(global_seed, stage);
    rng.set_stream(index);
    rng
}
