//! Seeded, splittable random streams.
//!
//! Every random operation takes a 64-bit seed. Independent sub-tasks derive
//! child seeds with [`derive_seed`] (a SplitMix64 finalizer over the parent
//! seed and a tag), and chunked loops draw chunk `j` from ChaCha8 stream `j`
//! of their seed. ChaCha is counter-based, so chunk `j` produces the same
//! numbers whatever order or thread evaluates it in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Rows per random chunk in sampling and Monte-Carlo loops.
pub const CHUNK: usize = 4096;

/// Tags used with [`derive_seed`]. Kept here so stream derivations are
/// documented in one place.
pub mod tag {
    pub const DATA_TRAIN: u64 = 0x7472_6169;
    pub const DATA_TEST: u64 = 0x7465_7374;
    pub const INIT: u64 = 0x696e_6974;
    pub const RESTART: u64 = 0x7273_7472;
    pub const SHUFFLE: u64 = 0x7368_7566;
    pub const ENTROPY: u64 = 0x656e_7472;
    pub const CALIBRATE: u64 = 0x6361_6c69;
    pub const HOLDOUT: u64 = 0x686f_6c64;
    pub const MEMBER: u64 = 0x6d65_6d62;
    pub const CELL: u64 = 0x6365_6c6c;
    pub const NULL: u64 = 0x6e75_6c6c;
    pub const ALT: u64 = 0x616c_7400;
    pub const PROJECTION: u64 = 0x7072_6f6a;
    pub const GROUND_TRUTH: u64 = 0x6774_7275;
    pub const BASE: u64 = 0x6261_7365;
    pub const REJECT: u64 = 0x7265_6a65;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for sub-task `tag` of `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.rotate_left(17))
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
