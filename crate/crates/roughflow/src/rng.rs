//! Deterministic random-number streams.
//!
//! Monte Carlo routines in this crate must be reproducible given a master
//! seed, independent of thread count. We derive one independent ChaCha
//! substream per (replicate, component) pair by mixing the labels into the
//! master seed with a splitmix-style finalizer, so parallel replicates can
//! each build their own generator without sharing state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Labels a logical random stream within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId {
    /// Monte Carlo replicate (path) index.
    pub replicate: u64,
    /// Component index (e.g. the `n`-th fBm layer, or a coordinate).
    pub component: u64,
}

impl StreamId {
    pub fn new(replicate: u64, component: u64) -> Self {
        StreamId { replicate, component }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a generator for the given stream from the master seed.
///
/// Distinct `(seed, id)` combinations produce (with overwhelming
/// probability) statistically independent streams.
pub fn stream(seed: u64, id: StreamId) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    let words = [
        splitmix64(seed),
        splitmix64(seed ^ 0xa076_1d64_78bd_642f ^ id.replicate),
        splitmix64(seed.wrapping_add(0xe703_7ed1_a0b4_28db) ^ id.component),
        splitmix64(id.replicate.wrapping_mul(0x8ebc_6af0_9c88_c6e3) ^ id.component.rotate_left(32)),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
