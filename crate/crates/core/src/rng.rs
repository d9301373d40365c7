//! Deterministic seeding. Every random draw in the crate goes through a
//! `ChaCha8Rng` keyed by a base seed and a stream path, so parallel workers
//! get independent, reproducible streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with a sequence of stream indices (splitmix64 steps).
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = splitmix(seed ^ 0x5851_F42D_4C95_7F2D);
    for &p in path {
        state = splitmix(state ^ splitmix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    state
}

pub fn seeded_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
