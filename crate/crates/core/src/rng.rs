//! Seeded, platform-independent random streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed for item `index` of a seeded job.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    seeded(seed.wrapping_add(index)).next_u64()
}
