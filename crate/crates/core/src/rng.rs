//! Named random streams.
//!
//! Every consumer of randomness asks for its own stream by name, derived
//! from one user seed. Adding a consumer never shifts another's draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream for `name` under `seed`. Names carry a version suffix
/// (e.g. `"synth.graph/v1"`) so a changed sampling scheme gets a fresh stream.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
