//! Deterministic RNG streams.
//!
//! Every random draw in the crate flows from one 64-bit root seed through a
//! counter-based split: a stream is identified by the root seed plus a short
//! tag path (component id, iteration, sample index, agent index, ...), so the
//! same draw is produced regardless of evaluation order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the crate's random-number consumers.
pub mod streams {
    /// Per-iteration perturbation sampling.
    pub const PERTURBATION: u64 = 1;
    /// Initial controller parameters.
    pub const PARAM_INIT: u64 = 2;
    /// Scenario state initialization (random boxes, headings).
    pub const SCENARIO_INIT: u64 = 3;
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a tag path (splitmix64 chaining).
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut state = mix(root ^ 0x9e37_79b9_7f4a_7c15);
    for &tag in tags {
        state = mix(state.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix(tag));
    }
    state
}

/// Deterministic generator for the stream identified by `root` and `tags`.
pub fn stream(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}
