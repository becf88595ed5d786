use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::kernel::{power_increment, HaarLevel, Hurst, RenormScheme};

/// Above this many cells the per-node convolutions go through an FFT.
const FFT_MIN_CELLS: usize = 256;

/// Precomputed basis values `e_i(t)` on the per-cell quadrature nodes.
///
/// Node `j` of cell `k` sits at `t = (k + theta_j) eps` with
/// `theta_j = j / (d - 1)`; both cell endpoints are nodes. Because `e_i(t)`
/// depends on `i` only through the lag `k - i`, one table of `2^N x d`
/// values serves every cell, and `W_hat` on the nodes is a causal
/// convolution of the coefficients with each table column.
pub struct FbmBasis {
    hurst: Hurst,
    level: HaarLevel,
    points: usize,
    theta: Vec<f64>,
    // lag-major: lag * points + j
    lags: Vec<f64>,
    renorm_nodes: Vec<f64>,
    fft: Option<FftConvolver>,
}

struct FftConvolver {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // spectrum of column j + i * column (j + 1), one per pair
    pair_spectra: Vec<Vec<Complex<f64>>>,
}

impl std::fmt::Debug for FbmBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmBasis")
            .field("hurst", &self.hurst)
            .field("level", &self.level)
            .field("points", &self.points)
            .field("fft", &self.fft.is_some())
            .finish()
    }
}

impl FbmBasis {
    /// Basis with `points >= 2` trapezoid nodes per cell.
    pub fn new(hurst: Hurst, level: HaarLevel, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Contract(format!("need at least 2 nodes per cell, got {points}")));
        }
        let n = level.cells();
        let alpha = hurst.alpha();
        let eps = level.eps();
        let theta: Vec<f64> = (0..points).map(|j| j as f64 / (points - 1) as f64).collect();
        let scale = hurst.moment_scale() * level.sqrt_scale() * eps.powf(alpha);
        let mut lags = vec![0.0; n * points];
        for (j, &th) in theta.iter().enumerate() {
            lags[j] = scale * th.powf(alpha);
        }
        for lag in 1..n {
            let row = &mut lags[lag * points..(lag + 1) * points];
            for (j, &th) in theta.iter().enumerate() {
                row[j] = scale * power_increment(alpha, lag as f64 + th);
            }
        }
        // left limit of C^eps inside the closed cell, so the right node is not reset to zero
        let renorm_nodes = theta
            .iter()
            .map(|&th| hurst.moment_scale() * n as f64 * (th * eps).powf(alpha))
            .collect();
        let fft = (n >= FFT_MIN_CELLS).then(|| FftConvolver::new(&lags, n, points));
        Ok(Self { hurst, level, points, theta, lags, renorm_nodes, fft })
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn level(&self) -> HaarLevel {
        self.level
    }

    /// Nodes per cell `d`.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Relative node positions `theta_j` in `[0, 1]`.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Node time `(k + theta_j) eps`.
    pub fn node_time(&self, cell: usize, j: usize) -> f64 {
        (cell as f64 + self.theta[j]) * self.level.eps()
    }

    /// Renormalization function on the nodes of any cell (it is eps-periodic).
    pub fn renorm_on_nodes(&self, scheme: RenormScheme) -> Vec<f64> {
        match scheme {
            RenormScheme::NonConstant => self.renorm_nodes.clone(),
            RenormScheme::Constant => {
                vec![crate::kernel::renorm_constant(self.hurst, self.level); self.points]
            }
        }
    }

    /// `e_{k - lag}` at node `j` of cell `k`.
    pub fn lag_value(&self, lag: usize, j: usize) -> f64 {
        self.lags[lag * self.points + j]
    }

    /// `W_hat` on all nodes of the first `cells` cells; `out[k * d + j]`.
    pub fn evaluate(&self, coeffs: &[f64], cells: usize, out: &mut [f64]) {
        let d = self.points;
        assert_eq!(coeffs.len(), self.level.cells());
        assert!(cells <= coeffs.len() && out.len() >= cells * d);
        match &self.fft {
            Some(conv) if cells * 2 > coeffs.len() => conv.evaluate(coeffs, cells, d, out),
            _ => self.evaluate_direct(coeffs, cells, out),
        }
    }

    fn evaluate_direct(&self, coeffs: &[f64], cells: usize, out: &mut [f64]) {
        let d = self.points;
        for k in 0..cells {
            let acc = &mut out[k * d..(k + 1) * d];
            acc.fill(0.0);
            for lag in 0..=k {
                let z = coeffs[k - lag];
                let row = &self.lags[lag * d..(lag + 1) * d];
                for (a, g) in acc.iter_mut().zip(row) {
                    *a += z * g;
                }
            }
        }
    }
}

impl FftConvolver {
    fn new(lags: &[f64], n: usize, d: usize) -> Self {
        let size = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut pair_spectra = Vec::with_capacity(d.div_ceil(2));
        for j in (0..d).step_by(2) {
            let mut buf = vec![Complex::new(0.0, 0.0); size];
            for lag in 0..n {
                let re = lags[lag * d + j];
                let im = if j + 1 < d { lags[lag * d + j + 1] } else { 0.0 };
                buf[lag] = Complex::new(re, im);
            }
            forward.process(&mut buf);
            pair_spectra.push(buf);
        }
        Self { size, forward, inverse, pair_spectra }
    }

    fn evaluate(&self, coeffs: &[f64], cells: usize, d: usize, out: &mut [f64]) {
        let mut zf = vec![Complex::new(0.0, 0.0); self.size];
        for (c, &z) in zf.iter_mut().zip(coeffs) {
            c.re = z;
        }
        self.forward.process(&mut zf);
        let norm = 1.0 / self.size as f64;
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (p, spec) in self.pair_spectra.iter().enumerate() {
            for ((b, z), s) in buf.iter_mut().zip(&zf).zip(spec) {
                *b = z * s;
            }
            self.inverse.process(&mut buf);
            let j = 2 * p;
            for k in 0..cells {
                out[k * d + j] = buf[k].re * norm;
                if j + 1 < d {
                    out[k * d + j + 1] = buf[k].im * norm;
                }
            }
        }
    }
}
