//! Seed derivation and the sampling primitives used by the episode sampler.
//!
//! Everything here is specified down to the bit so that other implementations
//! can reproduce the same episodes: seeds are mixed with the SplitMix64
//! finalizer, the stream generator is xoshiro256** seeded through SplitMix64,
//! bounded integers use Lemire's multiply-and-reject method and subsets are
//! drawn with a partial Fisher-Yates shuffle.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The generator behind every stochastic component in the crate.
pub type StreamRng = Xoshiro256StarStar;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based seed for episode `index` of a run seeded with `master_seed`.
///
/// Equivalent to the `index + 1`-th output of a SplitMix64 stream started at
/// `master_seed`, so it is a bijection in `index` for a fixed master seed.
pub fn derive_episode_seed(master_seed: u64, episode_index: u64) -> u64 {
    mix64(master_seed.wrapping_add(episode_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn stream(seed: u64) -> StreamRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Uniform integer in `0..bound` (Lemire, "Fast random integer generation in an interval").
pub fn uniform_below<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0, "uniform_below: empty range");
    let mut m = (rng.next_u64() as u128) * (bound as u128);
    let mut low = m as u64;
    if low < bound {
        let threshold = bound.wrapping_neg() % bound;
        while low < threshold {
            m = (rng.next_u64() as u128) * (bound as u128);
            low = m as u64;
        }
    }
    (m >> 64) as u64
}

/// Draws `count` distinct elements of `pool` in selection order.
///
/// Partial Fisher-Yates: step `i` swaps position `i` with a uniform position in
/// `i..len`. The pool is copied, so the caller's ordering is the reference.
pub fn sample_without_replacement<T: Copy, R: RngCore + ?Sized>(rng: &mut R, pool: &[T], count: usize) -> Vec<T> {
    assert!(count <= pool.len(), "sample larger than pool");
    let mut work = pool.to_vec();
    for i in 0..count {
        let j = i + uniform_below(rng, (work.len() - i) as u64) as usize;
        work.swap(i, j);
    }
    work.truncate(count);
    work
}
