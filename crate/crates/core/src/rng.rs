//! Seeded random streams.
//!
//! Every stochastic step in the crate draws from [`ChaCha8Rng`], which is
//! specified independently of platform and word size. Platform-default
//! generators (`thread_rng`, `OsRng`) are never used. Sub-streams are derived
//! from a master seed with SplitMix64 so that, for example, frame `i` of a
//! dataset does not depend on how many frames precede it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as Rng;

/// One SplitMix64 output step.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of sub-stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Labelled sub-stream, for independent purposes sharing one seed.
pub fn derive_labeled(master: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix64(master), |acc, b| splitmix64(acc ^ u64::from(b)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible() {
        let mut a = rng_from_seed(derive_seed(7, 3));
        let mut b = rng_from_seed(derive_seed(7, 3));
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn splitmix_reference_value() {
        // First output of the reference SplitMix64 seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn labels_separate_streams() {
        assert_ne!(derive_labeled(1, "depth"), derive_labeled(1, "normals"));
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }
}
