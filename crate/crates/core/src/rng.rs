//! Deterministic RNG streams for parallel blocks.
//!
//! Per-subject sampler and simulator blocks each get their own generator,
//! seeded from `(seed, context, index)` through a splitmix64 mix. The streams
//! are independent of thread scheduling, so serial and parallel execution of
//! the same workload produce bitwise-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the stream seed for `(seed, context, index)`.
///
/// `context` is the sweep iteration for the fitting loop (1-based) and 0 for
/// one-shot uses (simulation, personalization).
pub fn stream_seed(seed: u64, context: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(context ^ splitmix64(index)))
}

/// Generator for one `(seed, context, index)` stream.
pub fn stream(seed: u64, context: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, context, index))
}

/// Master generator for the serialized parts of a run.
pub fn master(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed))
}
