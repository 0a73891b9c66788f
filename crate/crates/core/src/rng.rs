//! Counter-based random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream keyed by
//! `(base_seed, replication)` with a 64-bit stream id selecting the purpose.
//! Streams never share state, so results do not depend on the order in which
//! replications (or patients within one) are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reported seed of a replication: the first word of its key.
pub fn replication_seed(base_seed: u64, replication: u64) -> u64 {
    let mut state = base_seed ^ replication.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut state)
}

/// Stream `stream` of replication `replication` under `base_seed`.
pub fn stream(base_seed: u64, replication: u64, stream: u64) -> StreamRng {
    let mut state = base_seed ^ replication.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Single-stream generator for non-replicated work (synthesis, clustering ties).
pub fn seeded(seed: u64) -> StreamRng {
    stream(seed, 0, 0)
}
