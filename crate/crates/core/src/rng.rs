//! The toolkit-wide pseudo-random stream.
//!
//! Every seeded operation draws from one [`ToolkitRng`], so results can be
//! reproduced by any implementation that follows these rules:
//!
//! * generator: xoshiro256\*\*, its 256-bit state filled by four successive
//!   outputs of splitmix64 started at the user seed;
//! * `uniform()`: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`;
//! * `gaussian()`: Box–Muller on two fresh uniforms `u1, u2`,
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, no cached second variate;
//! * `below(n)`: `(next_u64() as u128 * n) >> 64`;
//! * `shuffle`: Fisher–Yates from the last index down, `j = below(i + 1)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct ToolkitRng {
    inner: Xoshiro256StarStar,
}

impl ToolkitRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Integer in `0..n`. `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
