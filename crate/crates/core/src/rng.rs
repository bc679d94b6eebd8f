//! Seed/stream RNG contract.
//!
//! Every stochastic routine takes a `(seed, stream)` pair. Work that is split
//! into batches derives one sub-stream per batch with [`substream`], so the
//! numbers drawn never depend on how batches are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for batch `index` of a computation running on `stream`.
///
/// The low 32 bits carry the batch index; callers keep `stream < 2^32`.
pub fn substream(stream: u64, index: u64) -> u64 {
    debug_assert!(index < (1 << 32));
    (stream << 32) | (index & 0xFFFF_FFFF)
}
