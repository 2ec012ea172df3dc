//! Deterministic random streams.
//!
//! Every stochastic routine takes a master seed and derives independent ChaCha
//! streams from a path of indices (chain, grid point, replication, ...). Nothing
//! reads system entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream for `seed` at the given index path. The empty path is the root stream.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut id = 0u64;
    for (depth, &p) in path.iter().enumerate() {
        id = splitmix64(id ^ splitmix64(p.wrapping_add(depth as u64 + 1)));
    }
    rng.set_stream(id);
    rng
}

/// Derive a child seed, for APIs that take a plain `u64` seed.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &p in path {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}
