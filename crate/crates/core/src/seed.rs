//! Seed-stream derivation.
//!
//! A single run seed fans out to per-component streams: the component label is
//! hashed with 64-bit FNV-1a, combined with the base seed and a stream index,
//! and passed through the SplitMix64 finalizer. Each stream then seeds a
//! ChaCha8 generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` of component `label`.
pub fn derive(base: u64, label: &str, index: u64) -> u64 {
    let h = fnv1a(label);
    splitmix64(splitmix64(base ^ h).wrapping_add(splitmix64(index ^ h.rotate_left(17))))
}

/// Convenience: a ChaCha8 generator for `derive(base, label, index)`.
pub fn rng(base: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, label, index))
}
