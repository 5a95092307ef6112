//! Seed derivation.
//!
//! Every random stream in a run is derived from the master seed and a short
//! list of integer tags (client id, round, purpose), so results never depend
//! on which worker evaluates a client or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags used when deriving independent streams.
pub mod stream {
    pub const SAMPLING: u64 = 1;
    pub const LOCAL_TRAIN: u64 = 2;
    pub const EVAL_TUNE: u64 = 3;
    pub const SCHEDULE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const DATA: u64 = 6;
    pub const PARTITION: u64 = 7;
    pub const THEORY: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a master seed together with tags into a new 64-bit seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_from(master: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, tags))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
