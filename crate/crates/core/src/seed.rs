//! Named seed substreams.
//!
//! Every source of randomness (data generation, parameter init, feature maps)
//! derives its seed from one master seed and a path of names, so changing one
//! component's stream leaves the others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from `parent` and a stream name (FNV-1a over the name,
/// then mixed).
pub fn derive(parent: u64, name: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    splitmix64(parent ^ splitmix64(h))
}

/// Derives a child seed indexed by integers, e.g. `(layer, head)`.
pub fn derive_indexed(parent: u64, name: &str, indices: &[usize]) -> u64 {
    indices
        .iter()
        .fold(derive(parent, name), |acc, &i| splitmix64(acc ^ (i as u64).wrapping_add(1)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        assert_eq!(derive(1, "data"), derive(1, "data"));
        assert_ne!(derive(1, "data"), derive(1, "init"));
        assert_ne!(derive(1, "data"), derive(2, "data"));
        assert_ne!(
            derive_indexed(5, "fm", &[0, 1]),
            derive_indexed(5, "fm", &[1, 0])
        );
    }
}
