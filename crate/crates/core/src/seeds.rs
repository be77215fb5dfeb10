//! Seed hierarchy.
//!
//! Every random stream in a trial is derived from the master seed through a
//! chain of tags, so that no two purposes ever share a stream and results do
//! not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags. Each stream in the simulation uses a distinct tag.
pub mod purpose {
    pub const TRIAL: u64 = 0x7472_6961_6c00_0001;
    pub const INIT: u64 = 0x696e_6974_0000_0002;
    pub const TARGET_MOTION: u64 = 0x7467_746d_6f76_0003;
    pub const OBSERVATION: u64 = 0x6f62_7365_7276_0004;
    pub const ROUNDS: u64 = 0x726f_756e_6473_0005;
    pub const PLANNER: u64 = 0x706c_616e_6e65_0006;
    pub const OBJECTIVE: u64 = 0x6f62_6a65_6374_0007;
    pub const RANDOM_ACTION: u64 = 0x7261_6e64_6163_0008;
    pub const CAPACITY: u64 = 0x6361_7061_6369_0009;
    pub const REFERENCE: u64 = 0x7265_6665_7265_000a;
    pub const METRIC: u64 = 0x6d65_7472_6963_000b;
    pub const SCENARIO: u64 = 0x7363_656e_6172_000c;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of tags.
pub fn derive(parent: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(parent), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// Seeded stream for a derived seed.
pub fn rng(parent: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(parent, tags))
}
