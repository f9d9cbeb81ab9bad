//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha12 keyed by the 64-bit
//! user seed. Independent purposes (mixing matrices, offsets, sources, weight
//! initialisation, shuffling) use separate ChaCha streams whose 64-bit
//! stream id is the FNV-1a hash of a purpose tag, optionally combined with a
//! shard index. Normal variates use the ziggurat transform from `rand_distr`.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Stream for one purpose.
pub fn stream(seed: u64, purpose: &str) -> Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(purpose.as_bytes()));
    rng
}

/// Stream for one shard of a purpose.
pub fn shard_stream(seed: u64, purpose: &str, shard: u64) -> Rng {
    let mut bytes = purpose.as_bytes().to_vec();
    bytes.push(b'#');
    bytes.extend_from_slice(&shard.to_le_bytes());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(&bytes));
    rng
}
