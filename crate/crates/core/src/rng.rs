//! Counter-seeded random streams.
//!
//! Every replication draws from its own ChaCha stream keyed by
//! `(seed, stream index)`, so work units can run in any order or on any thread
//! and still produce identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream index reserved for draws shared by every replication of an
/// experiment (for example fixed regression designs).
pub const SHARED_STREAM: u64 = u64::MAX;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
