//! Shared input builders for the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use bbs_core;

/// Deterministic int8 values with roughly the spread of trained weights.
pub fn weight_block(len: usize, seed: u64) -> Vec<i8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| (rng.gen_range(-40.0f32..40.0) as i32).clamp(-128, 127) as i8).collect()
}
