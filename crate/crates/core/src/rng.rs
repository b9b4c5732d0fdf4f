//! Deterministic random-stream derivation.
//!
//! Every stochastic task derives its own generator from (seed, purpose tag,
//! counters) so results never depend on evaluation order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 — tiny, well-mixed step function used only for key derivation.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha stream from a seed and a word path.
///
/// Distinct paths give statistically independent streams; the same path
/// always gives the same stream.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha12Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    // Absorb the path (order-sensitive), then squeeze four key words.
    for &p in path {
        state = splitmix64(&mut state) ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
