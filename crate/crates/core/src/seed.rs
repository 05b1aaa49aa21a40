//! Deterministic seed derivation for per-task random streams.
//!
//! Parallel tasks derive their seed from the run seed plus a tuple of task
//! coordinates, so sampled results never depend on scheduling order.

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each coordinate in turn.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn distinct_coordinates_give_distinct_seeds() {
        let mut seen = HashSet::new();
        for pair in 0..8u64 {
            for weight in 0..20u64 {
                for sign in 0..2u64 {
                    assert!(seen.insert(derive_seed(7, &[pair, weight, sign])));
                }
            }
        }
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_eq!(derive_seed(3, &[4, 5]), derive_seed(3, &[4, 5]));
    }
}
