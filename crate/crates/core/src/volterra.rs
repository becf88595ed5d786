//! Renormalized Wong-Zakai scheme for stochastic Volterra equations
//!
//! ```text
//! Z_t = z + int_0^t K(s, t) (u(Z_s) dW^eps_s + (v(Z_s) - C^eps(s) u u'(Z_s)) ds)
//! ```
//!
//! driven by Haar noise. Coefficients are frozen at each cell's left
//! endpoint and the kernel is integrated exactly over every cell.
//!
//! Two steppers are provided. [`Stepper::LeftPoint`] freezes the whole
//! integrand, renormalization included, at the left endpoint. Freezing
//! `u(Z)` discards the within-cell feedback `u'(Z) dZ` that the
//! renormalization is there to cancel, so that scheme converges to the Ito
//! equation with drift `v - u u' / 2` (at `H = 1/2` it is exactly Euler for
//! that drift). [`Stepper::SecondOrder`] keeps the first-order within-cell
//! term: cell `l` contributes
//!
//! ```text
//! (u 2^{N/2} xi_l + v) m_{k-l} + u u' (xi_l^2 A_{k-l} - R_{k-l})
//! ```
//!
//! with `m` the kernel moment, `A = int_cell C^eps(s) K(s, t_k) ds` and `R`
//! the renormalization integral (`A` itself for the non-constant scheme,
//! `C_eps m` for the constant one). At `H = 1/2` this is the Milstein
//! scheme.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::functions::{FunctionFamily, SmoothFunction};
use crate::kernel::{cell_index, power_increment, renorm_constant, HaarLevel, Hurst, RenormScheme};
use crate::mc::{map_chunks, CHUNK_SIZE};
use crate::noise::HaarWhiteNoise;
use crate::quad;

/// Coefficients `(z, u, v, f)` of a non-simple rough volatility model.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraCoeffs {
    pub z: f64,
    pub u: FunctionFamily,
    pub v: FunctionFamily,
    pub f: FunctionFamily,
}

impl VolterraCoeffs {
    /// Rough Heston variance: `u = eta sqrt(.)`, `v = lambda (theta - .)`, `f = sqrt(.)`,
    /// with square roots floored at `floor`.
    pub fn rough_heston(v0: f64, eta: f64, lambda: f64, theta: f64, floor: f64) -> Result<Self> {
        Ok(Self {
            z: v0,
            u: FunctionFamily::scaled_sqrt(floor, eta)?,
            v: FunctionFamily::linear(lambda * theta, -lambda),
            f: FunctionFamily::sqrt(floor)?,
        })
    }
}

/// Time-stepping rule inside each Haar cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepper {
    #[default]
    SecondOrder,
    LeftPoint,
}

impl Stepper {
    pub fn name(self) -> &'static str {
        match self {
            Stepper::SecondOrder => "second-order",
            Stepper::LeftPoint => "left-point",
        }
    }
}

impl fmt::Display for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stepper {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "second-order" => Ok(Stepper::SecondOrder),
            "left-point" => Ok(Stepper::LeftPoint),
            other => Err(Error::Config(format!("unknown stepper `{other}` (expected second-order|left-point)"))),
        }
    }
}

/// `int_0^1 theta^{H+1/2} (x - theta)^{H-1/2} d theta` for `x >= 1`.
fn renorm_kernel_integral(h: Hurst, x: f64) -> Result<f64> {
    let hv = h.value();
    let alpha = h.alpha();
    if x == 1.0 {
        return Ok(statrs::function::beta::beta(alpha + 1.0, hv + 0.5));
    }
    let scale = x.powf(hv - 0.5).max(1e-300);
    quad::integrate(|th: f64| th.powf(alpha) * (x - th).powf(hv - 0.5), 0.0, 1.0, 1e-14 * scale)
        .map(|r| r.value)
        .map_err(|e| Error::Numeric(format!("renormalization integral at lag {x}: {e}")))
}

/// Precomputed lag tables for one `(H, N, scheme, stepper)`.
#[derive(Debug, Clone)]
pub struct VolterraSolver {
    hurst: Hurst,
    level: HaarLevel,
    scheme: RenormScheme,
    stepper: Stepper,
    cbar: f64,
    // index L = k - l >= 1; entry 0 unused
    moments: Vec<f64>,
    renorm_a: Vec<f64>,
}

/// Per-cell drivers of one solved path.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraPath {
    /// `Z` at the grid points `k eps`, `k = 0..=2^N`.
    pub grid: Vec<f64>,
    level: HaarLevel,
    z0: f64,
    drift: Vec<f64>,
    quad_coef: Vec<f64>,
    renorm_coef: Vec<f64>,
    xi: Vec<f64>,
}

impl VolterraPath {
    pub fn level(&self) -> HaarLevel {
        self.level
    }
}

impl VolterraSolver {
    pub fn new(hurst: Hurst, level: HaarLevel, scheme: RenormScheme, stepper: Stepper) -> Result<Self> {
        if hurst.value() <= 0.25 {
            log::warn!("H = {} <= 1/4: renormalized Volterra scheme lacks theoretical backing", hurst.value());
        }
        let n = level.cells();
        let eps = level.eps();
        let alpha = hurst.alpha();
        let mscale = hurst.moment_scale() * eps.powf(alpha);
        let mut moments = vec![0.0; n + 1];
        for (lag, m) in moments.iter_mut().enumerate().skip(1) {
            *m = mscale * power_increment(alpha, lag as f64);
        }
        let ascale = hurst.moment_scale() * (2.0 * hurst.value()).sqrt() * eps.powf(2.0 * hurst.value());
        let mut renorm_a = vec![0.0; n + 1];
        if stepper == Stepper::SecondOrder {
            for (lag, a) in renorm_a.iter_mut().enumerate().skip(1) {
                *a = ascale * renorm_kernel_integral(hurst, lag as f64)?;
            }
        }
        Ok(Self { hurst, level, scheme, stepper, cbar: renorm_constant(hurst, level), moments, renorm_a })
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    pub fn level(&self) -> HaarLevel {
        self.level
    }

    pub fn scheme(&self) -> RenormScheme {
        self.scheme
    }

    pub fn stepper(&self) -> Stepper {
        self.stepper
    }

    fn renorm_r(&self, lag: usize) -> f64 {
        match self.scheme {
            RenormScheme::NonConstant => self.renorm_a[lag],
            RenormScheme::Constant => self.cbar * self.moments[lag],
        }
    }

    /// Solve on every grid point `k eps`.
    pub fn solve_grid(&self, noise: &HaarWhiteNoise, coeffs: &VolterraCoeffs) -> Result<VolterraPath> {
        if noise.level() != self.level {
            return Err(Error::Contract(format!(
                "sample is at level {}, solver expects {}",
                noise.level(),
                self.level
            )));
        }
        for (name, g) in [("u", &coeffs.u), ("v", &coeffs.v)] {
            if g.max_order() < 1 {
                return Err(Error::Contract(format!("coefficient {name} needs a first derivative")));
            }
        }
        let n = self.level.cells();
        let scale = self.level.sqrt_scale();
        let xi = noise.coeffs();
        let mut grid = vec![0.0; n + 1];
        let mut drift = vec![0.0; n];
        let mut quad_coef = vec![0.0; n];
        let mut renorm_coef = vec![0.0; n];
        grid[0] = coeffs.z;
        for k in 0..n {
            let zk = grid[k];
            let t = k as f64 * self.level.eps();
            let (u, du) = coeffs.u.value_and_slope(zk, t);
            let v = coeffs.v.eval(0, zk, t);
            let uu = u * du;
            match self.stepper {
                Stepper::LeftPoint => drift[k] = u * scale * xi[k] + v - self.cbar * uu,
                Stepper::SecondOrder => {
                    drift[k] = u * scale * xi[k] + v;
                    quad_coef[k] = uu * xi[k] * xi[k];
                    renorm_coef[k] = uu;
                }
            }
            let mut acc = coeffs.z;
            for l in 0..=k {
                let lag = k + 1 - l;
                acc += drift[l] * self.moments[lag];
                if self.stepper == Stepper::SecondOrder {
                    acc += quad_coef[l] * self.renorm_a[lag] - renorm_coef[l] * self.renorm_r(lag);
                }
            }
            if !acc.is_finite() {
                return Err(Error::Diverged { index: k + 1 });
            }
            grid[k + 1] = acc;
        }
        Ok(VolterraPath {
            grid,
            level: self.level,
            z0: coeffs.z,
            drift,
            quad_coef,
            renorm_coef,
            xi: xi.to_vec(),
        })
    }

    /// `Z` at an arbitrary time, re-summing kernel integrals against the frozen cell drivers.
    pub fn evaluate(&self, path: &VolterraPath, coeffs: &VolterraCoeffs, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, 1]")));
        }
        let n = self.level.cells();
        let eps = self.level.eps();
        let q = cell_index(self.level, t) as usize;
        if q >= n || t == q as f64 * eps {
            return Ok(path.grid[q.min(n)]);
        }
        let h = self.hurst;
        let alpha = h.alpha();
        let mscale = h.moment_scale() * eps.powf(alpha);
        let ascale = h.moment_scale() * (2.0 * h.value()).sqrt() * eps.powf(2.0 * h.value());
        let mut acc = path.z0;
        for l in 0..q {
            let x = (t - l as f64 * eps) / eps;
            let m = mscale * power_increment(alpha, x);
            acc += path.drift[l] * m;
            if self.stepper == Stepper::SecondOrder {
                let a = ascale * renorm_kernel_integral(h, x)?;
                let r = match self.scheme {
                    RenormScheme::NonConstant => a,
                    RenormScheme::Constant => self.cbar * m,
                };
                acc += path.quad_coef[l] * a - path.renorm_coef[l] * r;
            }
        }
        // partial current cell, state frozen at Z_q
        let tau = t - q as f64 * eps;
        let zq = path.grid[q];
        let tq = q as f64 * eps;
        let (u, du) = coeffs.u.value_and_slope(zq, tq);
        let v = coeffs.v.eval(0, zq, tq);
        let uu = u * du;
        let m = h.moment_scale() * tau.powf(alpha);
        let wdot = self.level.sqrt_scale() * path.xi[q];
        match self.stepper {
            Stepper::LeftPoint => acc += (u * wdot + v - self.cbar * uu) * m,
            Stepper::SecondOrder => {
                let a = h.moment_scale()
                    * (2.0 * h.value()).sqrt()
                    * n as f64
                    * tau.powf(2.0 * h.value() + 1.0)
                    * statrs::function::beta::beta(alpha + 1.0, h.value() + 0.5);
                let r = match self.scheme {
                    RenormScheme::NonConstant => a,
                    RenormScheme::Constant => self.cbar * m,
                };
                acc += (u * wdot + v) * m + uu * (path.xi[q] * path.xi[q] * a - r);
            }
        }
        if !acc.is_finite() {
            return Err(Error::Diverged { index: q });
        }
        Ok(acc)
    }
}

/// Solve one sample and report `Z` on `out_grid`.
pub fn solve_volterra(
    noise: &HaarWhiteNoise,
    hurst: Hurst,
    coeffs: &VolterraCoeffs,
    scheme: RenormScheme,
    stepper: Stepper,
    out_grid: &[f64],
) -> Result<Vec<f64>> {
    let solver = VolterraSolver::new(hurst, noise.level(), scheme, stepper)?;
    let path = solver.solve_grid(noise, coeffs)?;
    out_grid.iter().map(|&t| solver.evaluate(&path, coeffs, t)).collect()
}

/// `count` sample paths on `out_grid`, sample `i` from stream `(seed, i)`.
pub fn simulate_paths(
    solver: &VolterraSolver,
    coeffs: &VolterraCoeffs,
    out_grid: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let chunks = map_chunks(count, CHUNK_SIZE, |range| {
        range
            .map(|id| {
                let noise = HaarWhiteNoise::generate(solver.level(), seed, id as u64);
                let path = solver.solve_grid(&noise, coeffs)?;
                out_grid.iter().map(|&t| solver.evaluate(&path, coeffs, t)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(chunks.into_iter().flatten().collect())
}

pub const PATH_HEADER: &str = "sample_id,t,Z_eps";

pub fn write_volterra_paths<W: Write>(mut out: W, out_grid: &[f64], paths: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{PATH_HEADER}")?;
    for (id, p) in paths.iter().enumerate() {
        for (t, z) in out_grid.iter().zip(p) {
            writeln!(out, "{id},{t},{z}")?;
        }
    }
    Ok(())
}
