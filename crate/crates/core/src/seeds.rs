//! Seed derivation for reproducible parallel experiments.
//!
//! Every stochastic task derives its own stream from `(master seed, task
//! path)`, so results do not depend on scheduling order. ChaCha8 is used as
//! the portable generator: its output is identical across platforms and
//! `rand` releases have kept it stable.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

// splitmix64 finalizer; good avalanche for cheap key mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a task path.
pub fn derive(master: u64, parts: &[u64]) -> u64 {
    let mut state = mix(master ^ 0x5bf0_3635_16f5_5c47);
    for &part in parts {
        state = mix(state ^ mix(part));
    }
    state
}

/// A seeded generator for the given task path.
pub fn rng(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, parts))
}

/// A generator seeded directly from a single value.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic_and_path_sensitive() {
        assert_eq!(derive(7, &[1, 2]), derive(7, &[1, 2]));
        assert_ne!(derive(7, &[1, 2]), derive(7, &[2, 1]));
        assert_ne!(derive(7, &[1, 2]), derive(8, &[1, 2]));
        assert_ne!(derive(7, &[]), derive(7, &[0]));
    }

    #[test]
    fn streams_are_independent_of_sibling_count() {
        use rand::Rng;
        let a: u64 = rng(1, &[0]).random();
        let b: u64 = rng(1, &[1]).random();
        assert_ne!(a, b);
        // Re-deriving the same path yields the same stream.
        let a2: u64 = rng(1, &[0]).random();
        assert_eq!(a, a2);
    }
}
