use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent SplitMix64 stream for `(seed, purpose, index)`.
///
/// Every random quantity in the crate draws from a stream keyed this way,
/// so results never depend on evaluation order.
pub fn stream(seed: u64, purpose: u64, index: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(mix(seed ^ mix(purpose ^ mix(index))))
}

pub mod purpose {
    pub const SCENE: u64 = 1;
    pub const TRAIN_POSES: u64 = 2;
    pub const TEST_POSES: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const PAIRS: u64 = 6;
    pub const GUESS: u64 = 7;
    pub const ORACLE: u64 = 8;
    pub const PROBE: u64 = 9;
}
