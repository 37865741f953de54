//! Deterministic random streams keyed by a seed and a list of tags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream for `(seed, tags...)`. The same key always
/// yields the same stream regardless of evaluation order elsewhere.
pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    let mut h = splitmix(seed);
    for &t in tags {
        h = splitmix(h ^ splitmix(t));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Stable tags for the different consumers of randomness.
pub mod tag {
    pub const TRAFFIC: u64 = 1;
    pub const DETECT: u64 = 2;
    pub const PHASE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const RRAM: u64 = 7;
    pub const RUMM: u64 = 8;
    pub const TRAJECTORY: u64 = 9;
    pub const COMBINATION: u64 = 10;
}
