//! Haar-approximated white noise and the approximate fractional Brownian
//! motion it induces.
//!
//! A level-`N` sample holds `2^N` i.i.d. standard normal coefficients `Z_i`.
//! The noise is `W'(t) = 2^{N/2} Z_{floor(t 2^N)}` and the Riemann-Liouville
//! process is `W_hat(t) = sum_i Z_i e_i(t)` with `e_i` the kernel integrated
//! over cell `i`.

mod basis;
mod joint;

use std::io::Write;

use rayon::prelude::*;

pub use basis::FbmBasis;
pub use joint::{build_joint_covariance, sample_joint, write_joint_paths, JointGaussianGrid, JointPath};

use crate::error::{Error, Result};
use crate::kernel::{cell_index, HaarLevel, Hurst};
use crate::rng::NormalStream;

/// One white-noise sample on `[0, 1]` at Haar level `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarWhiteNoise {
    level: HaarLevel,
    coeffs: Vec<f64>,
    seed: u64,
    sample_id: u64,
}

impl HaarWhiteNoise {
    /// Draw sample `sample_id` of stream `seed`; coefficient `i` is draw `i` of that stream.
    pub fn generate(level: HaarLevel, seed: u64, sample_id: u64) -> Self {
        let mut coeffs = vec![0.0; level.cells()];
        NormalStream::new(seed, sample_id).fill_normal(&mut coeffs);
        Self { level, coeffs, seed, sample_id }
    }

    /// Wrap explicit coefficients; the length must be `2^N`.
    pub fn from_coeffs(level: HaarLevel, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != level.cells() {
            return Err(Error::Contract(format!(
                "level {} needs {} coefficients, got {}",
                level,
                level.cells(),
                coeffs.len()
            )));
        }
        Ok(Self { level, coeffs, seed: 0, sample_id: 0 })
    }

    pub fn level(&self) -> HaarLevel {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_id(&self) -> u64 {
        self.sample_id
    }

    /// Pairwise merge into the parent level: `Z'_i = (Z_{2i} + Z_{2i+1}) / sqrt 2`.
    pub fn coarsen(&self) -> Result<Self> {
        let level = self
            .level
            .coarser()
            .ok_or_else(|| Error::Contract("cannot coarsen a level-0 sample".into()))?;
        let coeffs = self
            .coeffs
            .chunks_exact(2)
            .map(|p| (p[0] + p[1]) * std::f64::consts::FRAC_1_SQRT_2)
            .collect();
        Ok(Self { level, coeffs, seed: self.seed, sample_id: self.sample_id })
    }

    /// Coarsen repeatedly down to `target`.
    pub fn coarsen_to(&self, target: HaarLevel) -> Result<Self> {
        if target > self.level {
            return Err(Error::Contract(format!(
                "cannot refine level {} to {}",
                self.level, target
            )));
        }
        let mut out = self.clone();
        while out.level > target {
            out = out.coarsen()?;
        }
        Ok(out)
    }

    /// Brownian motion `W(t) = int_0^t W'(r) dr`.
    pub fn brownian(&self, t: f64) -> f64 {
        let n = self.level.cells();
        let x = (t.clamp(0.0, 1.0)) * n as f64;
        let k = (x.floor() as usize).min(n);
        let full: f64 = self.coeffs[..k].iter().sum();
        let partial = if k < n { (x - k as f64) * self.coeffs[k] } else { 0.0 };
        (full + partial) / self.level.sqrt_scale()
    }

    /// 64-bit FNV-1a digest of the coefficient bits.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in &self.coeffs {
            for b in c.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Draw `count` samples with ids `0..count`.
pub fn sample_haar_noise(lvl: HaarLevel, count: usize, seed: u64) -> Result<Vec<HaarWhiteNoise>> {
    if count == 0 {
        return Err(Error::Contract("sample count must be at least 1".into()));
    }
    Ok((0..count as u64)
        .into_par_iter()
        .map(|id| HaarWhiteNoise::generate(lvl, seed, id))
        .collect())
}

/// Basis function `e_i(t)` of the approximate fBM.
pub fn fbm_basis_fn(h: Hurst, lvl: HaarLevel, i: usize, t: f64) -> f64 {
    let eps = lvl.eps();
    let left = i as f64 * eps;
    if t <= left {
        return 0.0;
    }
    let right = (left + eps).min(t);
    let alpha = h.alpha();
    h.moment_scale() * lvl.sqrt_scale() * ((t - left).powf(alpha) - (t - right).powf(alpha))
}

/// `W_hat(t) = sum_i Z_i e_i(t)`, summing only cells that start before `t`.
pub fn fbm_eval(noise: &HaarWhiteNoise, h: Hurst, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0, 1]")));
    }
    let lvl = noise.level;
    let last = (cell_index(lvl, t).max(0) as usize).min(lvl.cells() - 1);
    Ok(noise.coeffs[..=last]
        .iter()
        .enumerate()
        .map(|(i, z)| z * fbm_basis_fn(h, lvl, i, t))
        .sum())
}

/// Piecewise-constant noise `2^{N/2} Z_{floor(t 2^N)}`; `t = 1` reads the last cell.
pub fn wdot_eval(noise: &HaarWhiteNoise, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0, 1]")));
    }
    let lvl = noise.level;
    let k = (cell_index(lvl, t) as usize).min(lvl.cells() - 1);
    Ok(lvl.sqrt_scale() * noise.coeffs[k])
}

/// Write `sample_id,t,Wdot_eps,W_hat_eps` rows for each sample on `grid`.
pub fn write_haar_paths<W: Write>(
    mut out: W,
    samples: &[HaarWhiteNoise],
    h: Hurst,
    grid: &[f64],
) -> Result<()> {
    writeln!(out, "sample_id,t,Wdot_eps,W_hat_eps")?;
    for s in samples {
        for &t in grid {
            writeln!(out, "{},{},{},{}", s.sample_id, t, wdot_eval(s, t)?, fbm_eval(s, h, t)?)?;
        }
    }
    Ok(())
}
