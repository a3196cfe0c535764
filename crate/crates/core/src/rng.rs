//! Deterministic random numbers, fully specified so that every experiment
//! is reproducible from a single u64 seed.
//!
//! Generator: SplitMix64 (Steele, Lea, Flood 2014). Substreams are derived
//! by folding the mix function over a seed and a list of ids, so any draw
//! can be keyed by *what it is for* — e.g. `(seed, role, class, instance,
//! measurement)` — instead of by draw order. Two call sites can therefore
//! never consume each other's numbers, and generation order is free to
//! change (or parallelize) without changing any output.

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream key: fold `mix64` over the seed and each id in order.
/// `derive(s, &[a, b])` differs from `derive(s, &[b, a])`.
pub fn derive(seed: u64, ids: &[u64]) -> u64 {
    let mut h = mix64(seed);
    for &id in ids {
        h = mix64(h ^ id);
    }
    h
}

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Stream keyed by `(seed, ids...)` via [`derive`].
    pub fn substream(seed: u64, ids: &[u64]) -> Self {
        Rng {
            state: derive(seed, ids),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1), 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n) by rejection-free modulo of the high bits.
    /// Bias is < 2^-53 for the n used here (shuffles, class picks).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize
    }

    /// Standard normal via Box–Muller.
    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
