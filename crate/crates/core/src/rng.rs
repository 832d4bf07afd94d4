//! Counter-based seed derivation.
//!
//! Every random stream in a campaign is keyed by `(master, stream, counter)`
//! and mixed through SplitMix64 finalizers, so a task's randomness never
//! depends on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `child = splitmix(splitmix(splitmix(master) ^ stream) ^ counter)`.
#[inline]
pub fn mix(master: u64, stream: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ counter)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Well-known stream identifiers used when deriving child seeds.
pub mod streams {
    pub const SUBSET: u64 = 0x5355_4253;
    pub const MODEL_INIT: u64 = 0x494e_4954;
    pub const CARDINALITY: u64 = 0x4341_5244;
    pub const PRECEDING: u64 = 0x5052_4543;
    pub const RANDOM_SELECT: u64 = 0x524e_4453;
    pub const POPULATION: u64 = 0x504f_5055;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const NOISE: u64 = 0x4e4f_4953;
}
