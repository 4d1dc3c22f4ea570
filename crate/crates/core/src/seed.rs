//! Deterministic seed derivation.
//!
//! All randomness flows from a single `u64` master seed. Every consumer (a
//! generated covariate table, a selector, one simulation repetition) gets
//! its own ChaCha stream keyed by `(tag, index)`, so results never depend
//! on scheduling order or on how many threads rayon uses.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// splitmix64 finalizer; bijective, decorrelates nearby inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the child seed for stream `(tag, index)` under `master`.
pub(crate) fn derive(master: u64, tag: u64, index: u64) -> u64 {
    let h = mix(master ^ 0x9e37_79b9_7f4a_7c15);
    let h = mix(h ^ tag);
    mix(h ^ index)
}

/// ChaCha stream for `(tag, index)` under `master`.
pub(crate) fn rng(master: u64, tag: u64, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(master, tag, index))
}

/// Stream tags. Each distinct random purpose gets one.
pub(crate) mod tag {
    /// Synthetic covariate generation (index = column).
    pub const COVARIATE: u64 = 1;
    /// Response noise outside the simulation harness.
    pub const RESPONSE: u64 = 2;
    /// Selector randomness (first point, random tie-breaks).
    pub const SELECT: u64 = 3;
    /// Uniform-random subsampling baseline.
    pub const UNIFORM: u64 = 4;
    /// Per-repetition streams inside the simulation harness.
    pub const REPETITION: u64 = 5;
    /// Test-point noise for the empirical worst-case prediction error.
    pub const WSPE: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_streams_for_distinct_keys() {
        let a = derive(7, tag::COVARIATE, 0);
        let b = derive(7, tag::COVARIATE, 1);
        let c = derive(7, tag::RESPONSE, 0);
        let d = derive(8, tag::COVARIATE, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(b, c);
    }

    #[test]
    fn derivation_is_pure() {
        assert_eq!(derive(42, 1, 9), derive(42, 1, 9));
    }
}
