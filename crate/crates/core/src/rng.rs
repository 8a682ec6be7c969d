//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by a 64-bit
//! master seed. Independent jobs (simulation replicates, permutation runs)
//! use separate ChaCha streams of the same key, so a job's draws depend only
//! on `(seed, stream)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a (group, index) pair into one stream id.
pub fn stream_id(group: u32, index: u32) -> u64 {
    (u64::from(group) << 32) | u64::from(index)
}
