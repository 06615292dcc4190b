//! Counter-based random streams.
//!
//! Every random draw is a pure function of `(seed, stream, index)`. Samplers
//! draw value `index = i` for blob `i`, so the result does not depend on how
//! the blob range is partitioned across threads or in which order it is
//! visited.

/// Stream tags. Each sampler reads its own stream so that two samplers run
/// with the same seed do not share draws.
pub mod streams {
    pub const BOX_FOCUSED: u64 = 0x426f_7846_6f63_7573;
    pub const RANDOM: u64 = 0x5261_6e64_6f6d_5331;
    pub const FPS_START: u64 = 0x4650_5353_7461_7274;
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A keyed stream of 64-bit values addressable by index.
///
/// Value `i` equals the `(i + 1)`-th output of SplitMix64 started from a
/// state derived from `(seed, stream)`, computed in O(1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterStream {
    key: u64,
}

impl CounterStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))),
        }
    }

    #[inline]
    pub fn u64_at(&self, index: u64) -> u64 {
        mix64(
            self.key
                .wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform draw in the open interval (0, 1); never returns 0 or 1.
    #[inline]
    pub fn open01_at(&self, index: u64) -> f64 {
        ((self.u64_at(index) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`. `bound` must be positive.
    pub fn below_at(&self, index: u64, bound: usize) -> usize {
        debug_assert!(bound > 0);
        // Multiply-shift; bias is below 2^-64 * bound.
        ((self.u64_at(index) as u128 * bound as u128) >> 64) as usize
    }
}
