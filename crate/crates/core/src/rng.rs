//! Deterministic RNG substreams.
//!
//! Every random draw in a run comes from a stream keyed by `(seed, step, purpose, index)`
//! so work can be split across threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes for independent substreams within one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Population = 1,
    Batch = 2,
    Tracking = 3,
    Training = 4,
    Oracle = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn substream(seed: u64, step: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mut key = splitmix64(seed);
    key = splitmix64(key ^ step);
    key = splitmix64(key ^ purpose as u64);
    key = splitmix64(key ^ index);
    ChaCha8Rng::seed_from_u64(key)
}
