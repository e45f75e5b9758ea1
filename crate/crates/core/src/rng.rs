//! Counter-based random streams.
//!
//! Every draw made during training or an experiment comes from a ChaCha8
//! generator seeded with `seed_from_u64(seed)` and switched to stream
//! `iteration * 65536 + slot`. Two draws with different `(iteration, slot)`
//! never share key stream, and a run can be replayed from any iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of slots available per iteration.
pub const SLOTS_PER_ITERATION: u64 = 1 << 16;

/// Generator for draw `slot` of `iteration` under `seed`.
pub fn stream_rng(seed: u64, iteration: u64, slot: u64) -> ChaCha8Rng {
    debug_assert!(slot < SLOTS_PER_ITERATION);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration.wrapping_mul(SLOTS_PER_ITERATION).wrapping_add(slot));
    rng.set_word_pos(0);
    rng
}
