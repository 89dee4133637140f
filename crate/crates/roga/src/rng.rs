//! Seedable, portable pseudo-random generation.
//!
//! All randomness in this crate flows through [`Rng64`], a SplitMix64
//! generator. The algorithm is pinned (not delegated to an external crate)
//! so that datasets, initializations and probes reproduce bit-for-bit
//! across platforms, library versions, and reimplementations in other
//! languages. Per-domain streams are derived by XOR-ing a base seed with
//! the domain id; per-restart streams likewise with the restart index.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 generator with a 64-bit state.
#[derive(Clone, Debug)]
pub struct Rng64 {
    state: u64,
}

impl Rng64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Next 64 uniformly distributed bits.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `(0, 1]`; never zero, so it is safe under `ln`.
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate via Box-Muller; consumes exactly two draws.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Unbiased uniform integer in `[0, n)` by rejection sampling.
    ///
    /// Panics if `n == 0`.
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_below requires n > 0");
        let n64 = n as u64;
        let limit = u64::MAX - (u64::MAX % n64 + 1) % n64;
        loop {
            let x = self.next_u64();
            if x <= limit {
                return (x % n64) as usize;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i + 1);
            xs.swap(i, j);
        }
    }
}
