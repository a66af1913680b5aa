//! Deterministic, counter-based random streams.
//!
//! Every Monte Carlo routine in this crate is a pure function of a master
//! seed: replicate r draws from a ChaCha12 stream whose key is derived from
//! the master seed and whose stream counter is the replicate index, so
//! replicates are independent and the schedule (thread order, chunking)
//! cannot change results. Distinct purposes within one run derive distinct
//! master seeds via [`child_seed`].

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// SplitMix64 step: the standard 64-bit finalizer used to expand and mix
/// seeds. Deterministic across platforms.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent master seed for a tagged sub-purpose of a run
/// (calibration vs. testing, one table per grid point, ...).
pub fn child_seed(master: u64, tag: u64) -> u64 {
    let mut s = master ^ 0xA076_1D64_78BD_642F_u64.wrapping_mul(tag | 1);
    let a = splitmix64(&mut s);
    let mut s2 = a ^ tag;
    splitmix64(&mut s2)
}

/// Identifies one replicate's random stream: a master seed plus a replicate
/// counter. Same spec, same stream, regardless of execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master: u64,
    pub replicate: u64,
}

impl SeedSpec {
    pub fn new(master: u64, replicate: u64) -> Self {
        SeedSpec { master, replicate }
    }

    /// The ChaCha12 generator for this (master, replicate) pair. The key is
    /// the SplitMix64 expansion of the master seed; the replicate index is
    /// the ChaCha stream counter.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut state = self.master;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(self.replicate);
        rng
    }
}
