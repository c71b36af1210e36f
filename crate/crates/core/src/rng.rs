//! Deterministic seeding.
//!
//! Every random stream in a run is derived from the run seed plus a small
//! tuple of counters (update index, episode index, ...), so results never
//! depend on worker count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a path of stream identifiers.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(root), |acc, &p| mix(acc ^ mix(p)))
}

pub fn rng_from(root: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, path))
}

/// Stream tags, so different consumers of the same counters never collide.
pub mod stream {
    pub const ENCODER_INIT: u64 = 1;
    pub const POLICY_INIT: u64 = 2;
    pub const SCRIPTS: u64 = 3;
    pub const EPISODE: u64 = 4;
    pub const MINIBATCH: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const PLANNER: u64 = 7;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let a: u64 = rng_from(7, &[1, 2]).random();
        let b: u64 = rng_from(7, &[1, 2]).random();
        let c: u64 = rng_from(7, &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
    }
}
