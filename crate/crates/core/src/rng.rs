//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`SimRng`], the ChaCha stream
//! cipher with 8 rounds (`rand_chacha::ChaCha8Rng`). Its output is fixed by
//! the ChaCha block function and the 64-bit seed, independent of platform,
//! so scenarios and rollouts reproduce bit-for-bit anywhere.
//!
//! Child seeds (per instance, per environment, per episode) are derived with
//! the SplitMix64 finalizer:
//!
//! ```text
//! z = x + 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! applied once per path component, so `derive_seed(s, &[i])` never depends
//! on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a base seed together with a path of indices into a child seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[cfg(test)]
mod tests {
    use rand::RngCore;

    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the SplitMix64 generator seeded with 0 are
        // splitmix64(0), splitmix64(golden), ...
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn derived_seeds_differ_by_path() {
        let a = derive_seed(7, &[0]);
        let b = derive_seed(7, &[1]);
        let c = derive_seed(8, &[0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, &[0]));
    }

    #[test]
    fn stream_is_reproducible() {
        let mut r1 = rng_from_seed(42);
        let mut r2 = rng_from_seed(42);
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }
}
