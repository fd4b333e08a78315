//! Seeded random streams.
//!
//! Every consumer derives its generator from a `(seed, stream)` pair so
//! results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for logical stream `stream` under the master `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream identifiers used across the crate.
pub mod streams {
    pub const INSTANCE: u64 = 1;
    pub const TREE: u64 = 2;
    pub const SDDP: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const PROBE: u64 = 7;
}
