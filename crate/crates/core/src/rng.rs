//! Deterministic seed derivation.
//!
//! Every random stream is keyed by a master seed and a short path of integer
//! tags, so draws never depend on the order in which trials, parties or
//! iterations are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Component tags for [`derive`].
pub mod tag {
    pub const TRIAL: u64 = 1;
    pub const SCHEDULE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const VIEW: u64 = 5;
    pub const CORRUPT: u64 = 6;
    pub const INPUT: u64 = 7;
    pub const MASK: u64 = 8;
    pub const PHASE_CALIBRATE: u64 = 9;
    pub const PHASE_EVALUATE: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed from a master seed and a tag path.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_mul(0xd6e8_feb8_6659_fd93)));
    }
    h
}

/// Opens the stream addressed by `master` and `path`.
pub fn stream(master: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive(master, path))
}
