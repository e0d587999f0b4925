//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a [`CounterRng`] whose key is
//! derived from a master seed and a path of integer tags (stream purpose,
//! replicate, particle index, interval, substep, ...). The output of a stream
//! depends only on its key and its position, so results do not change with
//! the order in which particles or replicates are processed, nor with the
//! number of worker threads.

use rand_core::{impls, RngCore};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finaliser.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Named substreams. The discriminant is folded into the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Signal = 1,
    Observation = 2,
    ReferenceObservation = 3,
    Initial = 4,
    Evolve = 5,
    Allocation = 6,
    OffspringMeans = 7,
    Replicate = 8,
    BranchTest = 9,
}

/// A keyed SplitMix64 generator: draw `k` of a stream is `mix(key + k·γ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ 0x6a09_e667_f3bc_c908),
            counter: 0,
        }
    }

    /// Stream keyed by `seed` followed by the tag path.
    pub fn keyed(seed: u64, path: &[u64]) -> Self {
        path.iter().fold(Self::new(seed), |rng, &tag| rng.fork(tag))
    }

    /// Stream for a named purpose, further keyed by `path`.
    pub fn stream(seed: u64, stream: Stream, path: &[u64]) -> Self {
        Self::new(seed).fork(stream as u64).descend(path)
    }

    /// Child stream; independent of the parent's position.
    pub fn fork(&self, tag: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(tag.wrapping_add(GOLDEN_GAMMA))),
            counter: 0,
        }
    }

    fn descend(self, path: &[u64]) -> Self {
        path.iter().fold(self, |rng, &tag| rng.fork(tag))
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(c.wrapping_mul(GOLDEN_GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
