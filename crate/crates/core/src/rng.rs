//! Deterministic stream derivation for reproducible experiments.
//!
//! All randomness in the crate flows through explicitly seeded streams;
//! there is no ambient global RNG. Parallel workers derive independent
//! streams from (seed, index) so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step, used to expand a seed into key material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha stream from a base seed and a stream index.
///
/// The mapping is injective in practice (256-bit key from two 64-bit inputs
/// via SplitMix64) and stable across platforms and thread counts.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let a = splitmix64(&mut state);
    let mut state2 = stream ^ 0xbb67_ae85_84ca_a73b ^ a.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        let w = splitmix64(&mut state2) ^ splitmix64(&mut state);
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Top-level stream for a command given its configured seed.
pub fn root_rng(seed: u64) -> ChaCha8Rng {
    derive_rng(seed, 0)
}
