//! Deterministic seed derivation.
//!
//! A master seed is split into independent per-(purpose, index...) streams
//! with SplitMix64 so that adding runs, agents, or purposes never perturbs the
//! streams of existing ones. The derivation is
//!
//! ```text
//! state = master
//! for tag in tags: state = splitmix64(state ^ splitmix64(tag ^ GAMMA))
//! stream_seed = splitmix64(state)
//! ```
//!
//! and the stream itself is a ChaCha8 generator keyed by `stream_seed`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping unrelated streams disjoint.
pub mod purpose {
    pub const INIT: u64 = 0x01;
    pub const ENSEMBLE: u64 = 0x02;
    pub const GRAPH: u64 = 0x03;
    pub const ADVERSARY: u64 = 0x04;
    pub const FABRICATE: u64 = 0x05;
    pub const REMOVAL: u64 = 0x06;
    pub const RUN: u64 = 0x07;
}

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a tag path into a single derived seed.
pub fn mix(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag ^ GAMMA));
    }
    splitmix64(state)
}

/// A seeded stream for the given tag path.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master, tags))
}
