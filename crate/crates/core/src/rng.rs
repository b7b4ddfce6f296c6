//! Seeded RNG streams.
//!
//! Every unit of work (chain, sweep cell, estimator rep) derives its own
//! ChaCha stream from the master seed and a stable index path, so results
//! are independent of thread scheduling and identical across reruns.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64, used to expand (seed, path) into ChaCha key material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic RNG for the given master seed and index path.
///
/// Distinct paths yield independent streams; the same (seed, path) always
/// yields the same stream regardless of how work is scheduled.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0xa076_1d64_78bd_642f;
    for &p in path {
        state ^= splitmix64(&mut state).wrapping_add(p.wrapping_mul(0xe703_7ed1_a0b4_28db));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
