//! Seed derivation for reproducible, schedule-independent randomness.
//!
//! Every random object in the crate (a sketch, a bootstrap replicate, a Monte
//! Carlo trial) draws from its own ChaCha8 stream whose seed is derived from a
//! parent seed and an integer index. Streams therefore never depend on the
//! order in which work is executed, and a parallel run reproduces the serial
//! one bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all sampling.
pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `index` of `seed`.
///
/// Children of distinct parents or distinct indices are decorrelated by two
/// rounds of the SplitMix64 finalizer; derivation nests, so
/// `substream(substream(master, trial), replicate)` is a valid address.
#[inline]
pub fn substream(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Generator for the stream identified by `seed`.
pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `stream(substream(seed, index))`.
pub fn substream_rng(seed: u64, index: u64) -> StreamRng {
    stream(substream(seed, index))
}
