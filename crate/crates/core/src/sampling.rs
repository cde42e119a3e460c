//! Seeded sampling shared by the audit, pipeline, analysis and training builders.
//!
//! Everything is driven by ChaCha8 so results are identical across platforms
//! and processes for a given seed.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `amount` distinct positions out of `0..len`, returned in ascending order.
///
/// Takes everything when `amount >= len`.
pub fn sample_positions(rng: &mut SeededRng, len: usize, amount: usize) -> Vec<usize> {
    if amount >= len {
        return (0..len).collect();
    }
    let mut picked = index::sample(rng, len, amount).into_vec();
    picked.sort_unstable();
    picked
}

/// `amount` distinct positions in draw order (no sorting).
pub fn draw_positions(rng: &mut SeededRng, len: usize, amount: usize) -> Vec<usize> {
    index::sample(rng, len, amount.min(len)).into_vec()
}
