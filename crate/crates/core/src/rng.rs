//! Counter-based standard normal streams.
//!
//! A stream is keyed by `(seed, sample_id)`; the `i`-th draw of a stream is a
//! fixed function of `(seed, sample_id, i)`. Samples can therefore be
//! regenerated in any order, on any thread, without touching their
//! predecessors.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

/// Normal draws for one `(seed, sample_id)` pair.
pub struct NormalStream {
    rng: ChaCha12Rng,
    normal: Normal,
}

impl NormalStream {
    pub fn new(seed: u64, sample_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(sample_id);
        Self { rng, normal: Normal::standard() }
    }

    /// Position the stream at draw index `index`.
    pub fn seek(&mut self, index: u64) {
        // one u64 draw consumes two 32-bit words
        self.rng.set_word_pos(u128::from(index) * 2);
    }

    /// Uniform in the open interval `(0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the inverse CDF.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let u = self.next_uniform();
        self.normal.inverse_cdf(u)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next_normal();
        }
    }
}
