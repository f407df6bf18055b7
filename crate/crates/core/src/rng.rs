//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream whose seed is
//! derived from the experiment seed, a domain tag and a path of indices
//! (episode, instance, ...). Agents and the environment therefore never share
//! a stream, and a stream's contents do not depend on how many draws other
//! consumers made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Domain tags for stream derivation.
pub mod domain {
    pub const WORKLOAD: u64 = 0x574f_524b;
    pub const ENVIRONMENT: u64 = 0x454e_5649;
    pub const AGENT: u64 = 0x4147_454e;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed`, `domain` and `path` into a single 64-bit stream seed.
pub fn derive_seed(seed: u64, domain: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(domain));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream(seed: u64, domain: u64, path: &[u64]) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, path))
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
