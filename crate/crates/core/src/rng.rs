//! Portable seeded randomness.
//!
//! Every random draw in the crate goes through [`SeededRng`], a thin layer over
//! ChaCha8 (`rand_chacha`) with explicitly defined conversions so that another
//! implementation can reproduce splits and noise bit-for-bit:
//!
//! * `uniform()`  = `(next_u64() >> 11) * 2^-53`, in `[0, 1)`
//! * `below(n)`   = `(next_u64() as u128 * n as u128) >> 64` (multiply-shift)
//! * `normal()`   = Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; one output per call
//! * `shuffle()`  = Fisher-Yates from the last index down, `j = below(i + 1)`
//!
//! The ChaCha8 stream is seeded with `ChaCha8Rng::seed_from_u64(seed)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
