//! Seed splitting.
//!
//! A master seed is turned into independent named substreams by hashing the
//! label with 64-bit FNV-1a, mixing it with the master seed and finalising
//! with SplitMix64:
//!
//! ```text
//! derive(master, label) = splitmix64(master ^ fnv1a64(label))
//! ```
//!
//! Each derived value seeds a [`ChaCha8Rng`]. Nested streams (for example one
//! per sweep point and then one per component) chain `derive` calls.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const CHANNEL: &str = "channel";
pub const INIT: &str = "init";
pub const EXPLORATION: &str = "exploration";
pub const REPLAY: &str = "replay";
pub const BASELINE: &str = "baseline";
pub const EVAL: &str = "eval";

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a64(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive(master: u64, label: &str) -> u64 {
    splitmix64(master ^ fnv1a64(label))
}

pub fn derive_indexed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive(master, label) ^ splitmix64(index))
}

pub fn rng(master: u64, label: &str) -> SimRng {
    SimRng::seed_from_u64(derive(master, label))
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
