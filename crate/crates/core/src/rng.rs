//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`stream`]: a ChaCha8
//! generator keyed by an explicit seed and a stream id. ChaCha is
//! counter-based, so independent streams (one per trial, per seed, per
//! purpose) never overlap and no global state exists.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids separating the purposes a single seed is used for.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const BOOTSTRAP: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const SAMPLE: u64 = 5;
    pub const MIX: u64 = 6;
    pub const TRIAL: u64 = 7;
    pub const ENSEMBLE: u64 = 8;
}

pub fn stream(seed: u64, purpose: u64) -> Rng {
    indexed(seed, purpose, 0)
}

/// Generator for item `index` under `purpose`, e.g. Monte-Carlo trial `index`.
/// Stream ids are `purpose << 48 | index`, so indices below 2^48 never collide.
pub fn indexed(seed: u64, purpose: u64, index: u64) -> Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) | index);
    rng
}
