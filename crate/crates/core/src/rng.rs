//! Deterministic random streams.
//!
//! Every draw in the crate comes from a ChaCha8 keystream. The 256-bit key is
//! expanded from a 64-bit master seed (`rand_core`'s PCG32-based
//! `seed_from_u64`), and the 64-bit ChaCha stream id selects an independent
//! keystream under that key. A `(master_seed, stream_id)` pair therefore pins
//! down every value a consumer sees, independent of thread scheduling.
//!
//! Stream ids are split hierarchically with [`child_stream`], which mixes a
//! parent id and a child index through the SplitMix64 finalizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator type used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Opens stream `stream_id` under `master_seed`.
pub fn stream_rng(master_seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the id of child `index` below `parent`.
pub fn child_stream(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Derives a stream id from a path of indices, e.g. `[cell, seed]`.
pub fn path_stream(path: &[u64]) -> u64 {
    path.iter().fold(0x5EED, |acc, &i| child_stream(acc, i))
}
