//! Fixed deterministic pseudo-random sequence for multistart grids and sample
//! points: a 64-bit linear congruential generator
//! `x <- 6364136223846793005*x + 1442695040888963407 (mod 2^64)` seeded with
//! `0x5EED` wherever reproducible output is required. Keeping the generator
//! in-tree pins byte-identical reports across platforms.

#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub const DEFAULT_SEED: u64 = 0x5EED;

    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.state
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn next_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
