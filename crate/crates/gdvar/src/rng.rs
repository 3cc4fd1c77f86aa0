//! Seeded uniform generator used across the bootstrap and samplers.
//!
//! Reproducibility across runs and platforms is part of the output contract
//! (the seed and the generator name are recorded in forecast metadata), so a
//! fixed, documented algorithm is implemented here instead of delegating to a
//! crate whose stream definition may change between versions:
//!
//! - state initialization: SplitMix64 (Steele, Lea & Flood 2014),
//! - stream: xoshiro256++ 1.0 (Blackman & Vigna 2019),
//! - uniform doubles: `u = ((x >> 11) + 0.5) * 2^-53`, strictly inside (0, 1).
//!
//! Sub-streams are derived from `(seed, stream_index)` so data-parallel
//! consumers (bootstrap iterations, restarts, replications) produce the same
//! numbers regardless of scheduling.

/// Identifier recorded in output metadata next to the seed.
pub const GENERATOR_ID: &str = "xoshiro256++/u53/v1";

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(SPLITMIX_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256++ generator with SplitMix64 seeding.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Generator seeded from a single 64-bit value.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    /// Deterministic sub-stream `stream` of the generator identified by `seed`.
    ///
    /// Distinct `stream` values yield independent-looking sequences; the
    /// mapping depends only on `(seed, stream)`, never on call order.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut sm = seed;
        let base = splitmix64(&mut sm);
        Rng::from_seed(base ^ stream.wrapping_mul(SPLITMIX_GAMMA).wrapping_add(stream))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw strictly inside (0, 1): 53 significant bits, half-offset.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw on the open interval (lo, hi).
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_open01()
    }

    /// Uniform integer in `[0, n)`.
    #[inline]
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift bounded rejection is overkill here: n is far below
        // 2^32 in every caller, so modulo bias is < 2^-32 of uniform.
        (self.next_u64() % n as u64) as usize
    }
}

/// A child seed for the `(seed, tag)` pair, for nested seeded components.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    Rng::substream(seed, tag).next_u64()
}
