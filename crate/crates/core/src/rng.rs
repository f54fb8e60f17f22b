//! Seed derivation and RNG streams.
//!
//! Every run owns a handful of independent ChaCha streams derived from a single
//! 64-bit seed, so that adding a consumer to one stream never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit combination of a base seed and an index.
pub fn hash64(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Seed of replication `r` of an experiment seeded with `seed`.
pub fn replication_seed(seed: u64, r: u64) -> u64 {
    hash64(seed, r)
}

/// Named streams consumed inside a single run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Environment,
    Sensing,
    Leader,
    Agent(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Topology => 1,
            Stream::Environment => 2,
            Stream::Sensing => 3,
            Stream::Leader => 4,
            Stream::Agent(i) => 1_000 + i as u64,
        }
    }
}

pub fn stream(run_seed: u64, which: Stream) -> StreamRng {
    ChaCha8Rng::seed_from_u64(hash64(run_seed, which.id()))
}
