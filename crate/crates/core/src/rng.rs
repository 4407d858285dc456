//! Deterministic, counter-indexed random number generation.
//!
//! Every stochastic choice in the crate flows through [`RngStream`], a
//! counter-based SplitMix64 generator: draw `i` from seed `s` is the SplitMix64
//! finalizer applied to `s + (i+1)·0x9E3779B97F4A7C15` (wrapping arithmetic).
//! The output depends only on `(seed, counter)`, never on platform, thread, or
//! call history, so any two runs with equal seeds are bit-identical and a
//! stream can be re-entered at any point by restoring its counter.

/// The SplitMix64 increment (the 64-bit golden ratio).
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective avalanche mix of a 64-bit word.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a fresh, well-separated seed from a parent seed and an integer tag.
///
/// Used to fan one user-facing seed out into independent streams (data
/// synthesis, weight init, shuffling, adapters, ...) without any stream
/// accidentally aliasing another. The scheme is fixed: mix the tag with an
/// odd constant, xor into the parent, and mix again.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(0x6A09_E667_F3BC_C909)))
}

/// A counter-indexed SplitMix64 stream.
///
/// `(seed, counter)` fully determine the next value; the counter advances by
/// one per 64-bit draw. Floating-point helpers consume a documented number of
/// draws (`uniform`: 1, `normal`: 2, `shuffle`: `len − 1`), so callers can
/// reason about stream positions exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    /// Start a stream at counter zero.
    pub fn new(seed: u64) -> Self {
        RngStream { seed, counter: 0 }
    }

    /// The seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit draws taken so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Resume a stream at an explicit counter position.
    pub fn at(seed: u64, counter: u64) -> Self {
        RngStream { seed, counter }
    }

    /// Next raw 64-bit draw.
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision. One draw.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi)`. One draw.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box–Muller (cosine branch). Exactly two draws.
    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite; u2 in [0, 1).
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, n)` via the fixed-point multiply trick. One draw.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// In-place Fisher–Yates shuffle. Exactly `len − 1` draws (0 for len ≤ 1).
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            slice.swap(i, j);
        }
    }

    /// Fill a buffer with uniform values in `[lo, hi)`.
    pub fn fill_uniform(&mut self, buf: &mut [f64], lo: f64, hi: f64) {
        for v in buf.iter_mut() {
            *v = self.uniform(lo, hi);
        }
    }

    /// Fill a buffer with standard normal values.
    pub fn fill_normal(&mut self, buf: &mut [f64]) {
        for v in buf.iter_mut() {
            *v = self.normal();
        }
    }
}
