//! Deterministic seed derivation.
//!
//! Every random draw in the simulator comes from a `ChaCha8Rng` seeded
//! through [`mix_seed`], so results are reproducible across runs, platforms
//! and worker counts. Sub-seeds are derived by folding context tags (client
//! id, round, purpose) into a base seed with splitmix64 steps.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One splitmix64 step.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold `tags` into `base`, producing an independent sub-seed.
pub fn mix_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &t in tags {
        s = splitmix64(s ^ t.wrapping_mul(0x2545_f491_4f6c_dd1d));
    }
    s
}

/// Deterministic generator for the given seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
