//! Seeded generators. Every random draw in the crate goes through
//! [`seeded`], so a fixed seed gives bitwise identical output.
//!
//! Gaussian variates use `rand_distr::StandardNormal` (ziggurat); uniform
//! variates on `[lo, hi)` use `random_range`. Changing either changes every
//! generated dataset, so treat them as part of the file format.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child seed for a named stream (splitmix64 finalizer over
/// the parent seed and the stream tag).
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for b in stream.bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream_and_parent() {
        assert_ne!(derive_seed(1, "weights"), derive_seed(1, "noise"));
        assert_ne!(derive_seed(1, "weights"), derive_seed(2, "weights"));
        assert_eq!(derive_seed(7, "init"), derive_seed(7, "init"));
    }
}
