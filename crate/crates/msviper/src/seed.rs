//! Deterministic seed derivation.
//!
//! Every stochastic component of the pipeline draws from a `ChaCha8Rng`
//! seeded through [`derive`]: a base seed mixed with a path of indices
//! (stream id, scenario index, iteration, rollout, ...). Rollouts are
//! therefore independent of execution order and thread count, and a run
//! is fully reproducible from its config seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the pipeline. Kept in one place so two call sites
/// never collide on the same derived seed.
pub mod stream {
    pub const ROLLOUT: u64 = 1;
    pub const DATASET: u64 = 2;
    pub const CV_EVAL: u64 = 3;
    pub const Q_TRAIN: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const DETECT: u64 = 6;
    pub const METRICS: u64 = 7;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and an index path.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(base), |acc, &x| mix(acc ^ mix(x)))
}

/// A counter-derived RNG for one unit of work.
pub fn rng(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}
