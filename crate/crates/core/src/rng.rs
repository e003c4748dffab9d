//! Seeded random streams.
//!
//! Every randomized step draws from its own ChaCha8 stream keyed by
//! `hash(base_seed, purpose)`, so generation, splitting, mismatch noise and
//! weight initialization are reproducible independently of each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const GENERATE: &str = "generate";
pub const SPLIT: &str = "split";
pub const MISMATCH: &str = "mismatch";
pub const INIT: &str = "init";

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Portable 64-bit hash of a base seed and a sequence of words.
pub fn derive_seed(base_seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(base_seed), |h, &w| mix64(h ^ mix64(w)))
}

pub fn stream_seed(base_seed: u64, purpose: &str) -> u64 {
    derive_seed(base_seed, &[fnv1a(purpose.as_bytes())])
}

pub fn stream(base_seed: u64, purpose: &str) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(base_seed, purpose))
}

/// Seed of one sweep trial; depends only on its own grid coordinates.
pub fn trial_seed(base_seed: u64, layers: usize, neurons: usize) -> u64 {
    derive_seed(base_seed, &[layers as u64, neurons as u64])
}
