//! Reproducible random streams.
//!
//! Every replication draws from its own ChaCha8 stream. The 256-bit key is
//! derived from the experiment's base seed and the 64-bit stream id from a
//! stable mix of the cell key and replication index, so any single
//! replication can be regenerated in isolation and results do not depend on
//! scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies one independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub base: u64,
    pub stream: u64,
}

impl StreamSeed {
    pub fn new(base: u64, stream: u64) -> Self {
        Self { base, stream }
    }

    /// Stream for replication `rep` of the cell identified by `cell_key`.
    pub fn for_replication(base: u64, cell_key: u64, rep: u64) -> Self {
        Self::new(base, mix2(cell_key, rep))
    }

    /// A derived seed for an auxiliary purpose (e.g. an oracle run attached to
    /// the same replication). `tag` separates purposes.
    pub fn derive(&self, tag: u64) -> Self {
        Self::new(self.base, mix2(self.stream, tag ^ 0xA5A5_5A5A_DEAD_BEEF))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.base;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable (version-independent) mixing of two words.
pub fn mix2(a: u64, b: u64) -> u64 {
    let mut s = a ^ b.rotate_left(32).wrapping_mul(0x2545_F491_4F6C_DD1D);
    let x = splitmix64(&mut s);
    let mut t = x ^ b;
    splitmix64(&mut t)
}

/// Stable key for a sequence of words, used to name experiment cells.
pub fn key_of(words: &[u64]) -> u64 {
    words.iter().fold(0xCBF2_9CE4_8422_2325, |acc, &w| mix2(acc, w))
}
