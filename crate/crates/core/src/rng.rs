//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from the
//! top-level seed and a path of integer labels, e.g. `(seed, STREAM_TREES,
//! tree_index)`. Streams depend only on their labels, never on scheduling,
//! so results do not change with the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SPLIT_PLAN: u64 = 1;
pub const STREAM_NUISANCE: u64 = 2;
pub const STREAM_CAUSAL_FOREST: u64 = 3;
pub const STREAM_TREES: u64 = 4;
pub const STREAM_CANDIDATES: u64 = 5;
pub const STREAM_BOOTSTRAP: u64 = 6;
pub const STREAM_SYNTHETIC: u64 = 7;
pub const STREAM_DDRCT: u64 = 8;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with each label in turn.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |h, &l| splitmix64(h ^ splitmix64(l)))
}

pub fn stream(seed: u64, labels: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}
