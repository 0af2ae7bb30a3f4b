//! Reproducible random streams.
//!
//! Every chain, row and epoch draws from its own ChaCha stream whose key is
//! derived from `(seed, domain, index, round)`. Results therefore do not
//! depend on the order (or thread) in which independent work is executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains used inside the crate. Callers may use any other value.
pub mod domain {
    pub const CHAIN: u64 = 0x01;
    pub const TRAIN: u64 = 0x02;
    pub const WARMUP: u64 = 0x03;
    pub const IMPUTE: u64 = 0x04;
    pub const INIT: u64 = 0x05;
    pub const DIAGNOSE: u64 = 0x06;
    pub const MASK: u64 = 0x07;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build the generator for one `(seed, domain, index, round)` key.
pub fn stream(seed: u64, domain: u64, index: u64, round: u64) -> StreamRng {
    let k0 = splitmix64(seed);
    let k1 = splitmix64(k0 ^ domain);
    let k2 = splitmix64(k1 ^ index);
    let k3 = splitmix64(k2 ^ round);
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([k0, k1, k2, k3]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    StreamRng::from_seed(key)
}

/// Identifies a family of chain streams: chain `c` of this key uses
/// `stream(seed, CHAIN, index, round * 2^20 + c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainKey {
    pub seed: u64,
    pub index: u64,
    pub round: u64,
}

impl ChainKey {
    pub fn new(seed: u64, index: u64, round: u64) -> Self {
        Self { seed, index, round }
    }

    pub fn chain(&self, chain: usize) -> StreamRng {
        stream(self.seed, domain::CHAIN, self.index, (self.round << 20) ^ chain as u64)
    }
}
