//! Seeded random sources.
//!
//! All randomness uses ChaCha8 (`rand_chacha::ChaCha8Rng`), whose output
//! stream is fixed by its algorithm and independent of platform and word
//! size. Per-task seeds are derived from one root seed by hashing the root
//! together with a list of integer tags, so that work units can run in any
//! order (or in parallel) and still draw identical streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and an ordered list of tags.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(root), |acc, &t| mix(acc ^ mix(t)))
}

/// Stable 64-bit tag for a string (FNV-1a).
pub fn tag_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
