//! Seeded random source shared by initialization, batch sampling and synthesis.
//!
//! Every stochastic step in the crate draws from [`SeededRng`], which is the
//! ChaCha stream cipher with 8 rounds (`rand_chacha::ChaCha8Rng`) seeded via
//! `seed_from_u64`. ChaCha output is specified bit-for-bit independent of
//! platform and endianness, so a run with a given seed reproduces everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a named sub-task from a parent seed.
pub fn derive(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut SeededRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
