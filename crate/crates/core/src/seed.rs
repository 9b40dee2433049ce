//! Seed derivation. Every random stream in a run is derived from one root
//! seed so that serial and parallel execution draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers used across the pipeline.
pub mod stream {
    pub const TRAIN: u64 = 1;
    pub const VALIDATION: u64 = 2;
    pub const TEST: u64 = 3;
    pub const MODEL_INIT: u64 = 10;
    pub const SHUFFLE: u64 = 11;
    pub const PROBE: u64 = 20;
}

/// Base seed of a named stream: `root + stream * 2^32`.
///
/// Per-item seeds are then `stream_seed(root, stream) + index`, so item `k`
/// of a stream never collides with item `k` of another stream for indices
/// below 2^32.
pub fn stream_seed(root: u64, stream: u64) -> u64 {
    root.wrapping_add(stream.wrapping_shl(32))
}

pub fn item_seed(root: u64, stream: u64, index: u64) -> u64 {
    stream_seed(root, stream).wrapping_add(index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
