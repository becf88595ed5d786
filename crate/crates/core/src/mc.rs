//! Deterministic parallel Monte Carlo reductions.
//!
//! Samples are split into fixed-size chunks. Each chunk is reduced
//! sequentially, and the chunk results are merged in ascending chunk order,
//! so the floating-point result depends only on the sample count and chunk
//! size, never on the number of worker threads.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples per reduction chunk.
pub const CHUNK_SIZE: usize = 4096;

/// Streaming mean and variance (Welford), mergeable with Chan's rule.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.n as f64 * w;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Run `per_chunk` over consecutive index ranges of at most `chunk` samples
/// and return the chunk results in ascending order.
pub fn map_chunks<T, F>(count: usize, chunk: usize, per_chunk: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<usize>) -> Result<T> + Sync,
{
    assert!(chunk > 0);
    let chunks = count.div_ceil(chunk);
    (0..chunks)
        .into_par_iter()
        .map(|c| per_chunk(c * chunk..((c + 1) * chunk).min(count)))
        .collect()
}

/// Moments of `dims` per-sample statistics over samples `0..count`.
///
/// `sample(id, out)` fills `out[..dims]` for sample `id`.
pub fn sample_moments<F>(count: usize, dims: usize, sample: F) -> Result<Vec<Moments>>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync,
{
    if count == 0 {
        return Err(Error::Contract("sample count must be at least 1".into()));
    }
    let partials = map_chunks(count, CHUNK_SIZE, |range| {
        let mut acc = vec![Moments::default(); dims];
        let mut buf = vec![0.0; dims];
        for id in range {
            sample(id as u64, &mut buf)?;
            for (m, &x) in acc.iter_mut().zip(&buf) {
                m.push(x);
            }
        }
        Ok(acc)
    })?;
    let mut total = vec![Moments::default(); dims];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(total)
}

/// Run `f` on a dedicated pool of `threads` workers (`0` means the global pool).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}
