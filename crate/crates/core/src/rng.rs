//! Reproducible random streams keyed by `(seed, replicate, step)`.
//!
//! Every replicate owns its own ChaCha key, and every step selects a separate
//! stream of that key, so a draw depends only on its coordinates and never on
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub replicate: u64,
}

impl StreamKey {
    pub fn new(seed: u64, replicate: u64) -> Self {
        StreamKey { seed, replicate }
    }

    /// Generator for one step of this replicate.
    pub fn step(&self, step: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.replicate.to_le_bytes());
        key[16..24].copy_from_slice(b"fshe-rng");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(step);
        rng
    }

    /// A sub-key for an independent purpose (e.g. a second family of draws).
    pub fn derive(&self, tag: u64) -> StreamKey {
        StreamKey { seed: self.seed ^ tag.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15, replicate: self.replicate }
    }
}
