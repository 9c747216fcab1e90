//! Per-run random streams derived from the master seed.
//!
//! Every stream is a ChaCha8 generator keyed by the 32 bytes
//! `master | slot | replicate | stream`, so distinct tuples never share a key.
//! Slot 0 holds the environment streams shared by all arms of a replicate;
//! arm `a` uses slot `a + 1`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Contexts = 0,
    ThetaStar = 1,
    Choices = 2,
    Exploration = 3,
    MleNoise = 4,
    TreeNoise = 5,
}

/// Which arm a stream belongs to; `None` is the shared environment slot.
pub fn stream_key(master: u64, arm: Option<usize>, replicate: usize, stream: Stream) -> [u8; 32] {
    let slot = arm.map_or(0, |a| a as u64 + 1);
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&slot.to_le_bytes());
    key[16..24].copy_from_slice(&(replicate as u64).to_le_bytes());
    key[24..].copy_from_slice(&(stream as u64).to_le_bytes());
    key
}

pub fn stream(master: u64, arm: Option<usize>, replicate: usize, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(stream_key(master, arm, replicate, stream))
}
