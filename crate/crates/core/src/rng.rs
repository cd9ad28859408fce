//! Replication random streams.
//!
//! Every replication draws from its own ChaCha8 stream. The 256-bit key comes
//! from the master seed; the 64-bit stream id packs the scenario-point index
//! and the replication index. ChaCha is counter based, so streams are
//! independent and a replication's draws do not depend on how many other
//! replications exist or on which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies one replication's random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamSeed {
    pub master: u64,
    pub point: u32,
    pub replication: u32,
}

impl StreamSeed {
    pub fn new(master: u64, point: u32, replication: u32) -> Self {
        StreamSeed { master, point, replication }
    }

    /// Stream seed for a standalone dataset (point 0, replication 0).
    pub fn single(master: u64) -> Self {
        StreamSeed::new(master, 0, 0)
    }

    pub fn stream_id(&self) -> u64 {
        ((self.point as u64) << 32) | self.replication as u64
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.master;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id());
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
