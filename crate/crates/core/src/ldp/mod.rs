//! Short-time large deviations: discretized rate functions and skew asymptotics.
//!
//! The rate function is
//!
//! ```text
//! I(y) = inf_h  |h|^2 / 2 + (y - rho I1(h))^2 / (2 I2(h)),
//! I1(h) = int_0^1 f(x^h(t)) h(t) dt,   I2(h) = int_0^1 f(x^h(t))^2 dt,
//! ```
//!
//! where `x^h` is `h_hat(t) = int_0^t K(s, t) h(s) ds` for simple models and
//! the solution of `z^h(t) = z + int_0^t K(s, t) u(z^h(s)) h(s) ds` for
//! non-simple ones. Controls are piecewise constant on `n` uniform cells; the
//! path is evaluated on the cell boundaries with exact kernel moments (the
//! factor `u(z^h)` frozen at each cell's left end), and `I1`, `I2` use the
//! cell-wise trapezoid rule.

mod optimize;

use std::io::Write;

use rayon::prelude::*;

pub use optimize::{minimize, BfgsConfig, BfgsOutcome};

use crate::error::{Error, Result};
use crate::functions::{FunctionFamily, SmoothFunction};
use crate::kernel::{c_h_constant, power_increment, Hurst};

/// Smallest admissible `I2` during the search.
pub const I2_FLOOR: f64 = 1e-12;
const PICARD_TOL: f64 = 1e-10;
const PICARD_MAX_ITER: usize = 200;

/// Discretized variational problem.
#[derive(Debug, Clone)]
pub struct LdpProblem {
    f: FunctionFamily,
    rho: f64,
    hurst: Hurst,
    n_grid: usize,
    diffusion: Option<(FunctionFamily, f64)>,
    // kernel moments over one cell at lag L = 1..=n
    moments: Vec<f64>,
}

impl LdpProblem {
    /// Simple model `sigma = f(W_hat)`.
    pub fn simple(f: FunctionFamily, rho: f64, hurst: Hurst, n_grid: usize) -> Result<Self> {
        Self::build(f, rho, hurst, n_grid, None)
    }

    /// Non-simple model `sigma = f(Z)`, `Z` driven by diffusion `u` from `z`.
    pub fn non_simple(f: FunctionFamily, u: FunctionFamily, z: f64, rho: f64, hurst: Hurst, n_grid: usize) -> Result<Self> {
        Self::build(f, rho, hurst, n_grid, Some((u, z)))
    }

    fn build(f: FunctionFamily, rho: f64, hurst: Hurst, n_grid: usize, diffusion: Option<(FunctionFamily, f64)>) -> Result<Self> {
        if n_grid < 2 {
            return Err(Error::Domain(format!("need at least 2 control cells, got {n_grid}")));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("correlation must lie in [-1, 1], got {rho}")));
        }
        let alpha = hurst.alpha();
        let scale = hurst.moment_scale() * (n_grid as f64).powf(-alpha);
        let mut moments = vec![0.0; n_grid + 1];
        for (lag, m) in moments.iter_mut().enumerate().skip(1) {
            *m = scale * power_increment(alpha, lag as f64);
        }
        Ok(Self { f, rho, hurst, n_grid, diffusion, moments })
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    fn start(&self) -> f64 {
        self.diffusion.as_ref().map_or(0.0, |d| d.1)
    }

    #[inline]
    fn diffusion_at(&self, x: f64) -> (f64, f64) {
        match &self.diffusion {
            Some((u, _)) => u.value_and_slope(x, 0.0),
            None => (1.0, 0.0),
        }
    }

    fn node_time(&self, i: usize) -> f64 {
        i as f64 / self.n_grid as f64
    }

    /// Forward substitution of the triangular path equations.
    fn forward_path(&self, h: &[f64]) -> Vec<f64> {
        let n = self.n_grid;
        let mut x = vec![self.start(); n + 1];
        let mut drive = vec![0.0; n];
        for i in 1..=n {
            drive[i - 1] = self.diffusion_at(x[i - 1]).0 * h[i - 1];
            let mut acc = self.start();
            for j in 0..i {
                acc += drive[j] * self.moments[i - j];
            }
            x[i] = acc;
        }
        x
    }

    /// `(I1, I2)` for control `h` (length `n_grid`).
    pub fn functionals(&self, h: &[f64]) -> (f64, f64) {
        let x = self.forward_path(h);
        self.functionals_on(h, &x)
    }

    fn functionals_on(&self, h: &[f64], x: &[f64]) -> (f64, f64) {
        let n = self.n_grid;
        let fx: Vec<f64> = x.iter().enumerate().map(|(i, &v)| self.f.eval(0, v, self.node_time(i))).collect();
        let w = 0.5 / n as f64;
        let mut i1 = 0.0;
        let mut i2 = 0.0;
        for j in 0..n {
            i1 += w * h[j] * (fx[j] + fx[j + 1]);
            i2 += w * (fx[j] * fx[j] + fx[j + 1] * fx[j + 1]);
        }
        (i1, i2)
    }

    /// Objective value and gradient in the scaled control `x = h / sqrt(n)`,
    /// so that `|h|^2_{L^2} = |x|^2`. `None` when `I2` falls below [`I2_FLOOR`].
    pub fn objective(&self, y: f64, xs: &[f64]) -> Option<(f64, Vec<f64>)> {
        let n = self.n_grid;
        let sq = (n as f64).sqrt();
        let h: Vec<f64> = xs.iter().map(|v| v * sq).collect();
        let x = self.forward_path(&h);
        let (i1, i2) = self.functionals_on(&h, &x);
        if !(i2 >= I2_FLOOR) || !i1.is_finite() {
            return None;
        }
        let e = y - self.rho * i1;
        let value = 0.5 * xs.iter().map(|v| v * v).sum::<f64>() + e * e / (2.0 * i2);
        let a1 = -self.rho * e / i2;
        let a2 = -e * e / (2.0 * i2 * i2);
        let w = 0.5 / n as f64;
        let mut fv = vec![0.0; n + 1];
        let mut dfv = vec![0.0; n + 1];
        for i in 0..=n {
            let (a, b) = self.f.value_and_slope(x[i], self.node_time(i));
            fv[i] = a;
            dfv[i] = b;
        }
        // adjoint sweep: lambda_i = dF/dx_i including downstream dependence
        let mut lambda = vec![0.0; n + 1];
        let mut grad = vec![0.0; n];
        for j in (0..=n).rev() {
            let hl = if j > 0 { h[j - 1] } else { 0.0 };
            let hr = if j < n { h[j] } else { 0.0 };
            let wi = if j == 0 || j == n { w } else { 2.0 * w };
            let direct = a1 * dfv[j] * w * (hl + hr) + a2 * 2.0 * fv[j] * dfv[j] * wi;
            if j == n {
                lambda[j] = direct;
                continue;
            }
            let s: f64 = (j + 1..=n).map(|i| lambda[i] * self.moments[i - j]).sum();
            let (g, dg) = self.diffusion_at(x[j]);
            lambda[j] = direct + dg * h[j] * s;
            grad[j] = h[j] / n as f64 + a1 * w * (fv[j] + fv[j + 1]) + g * s;
        }
        for g in grad.iter_mut() {
            *g *= sq;
        }
        (value.is_finite()).then_some((value, grad))
    }
}

/// Path of a control on the `n_grid + 1` cell boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    pub values: Vec<f64>,
    /// Picard sweeps before the fixed point was reached (0 for simple models).
    pub iterations: usize,
}

/// `h_hat` (simple) or `z^h` by Picard iteration (non-simple) on the grid.
pub fn controlled_path(prob: &LdpProblem, h: &[f64]) -> Result<ControlledPath> {
    let n = prob.n_grid;
    if h.len() != n {
        return Err(Error::Contract(format!("control has {} cells, problem has {n}", h.len())));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("control must be finite".into()));
    }
    if prob.diffusion.is_none() {
        return Ok(ControlledPath { values: prob.forward_path(h), iterations: 0 });
    }
    let z = prob.start();
    let mut cur = vec![z; n + 1];
    let mut residual = f64::INFINITY;
    for sweep in 1..=PICARD_MAX_ITER {
        let drive: Vec<f64> = (0..n).map(|j| prob.diffusion_at(cur[j]).0 * h[j]).collect();
        let next: Vec<f64> = (0..=n)
            .map(|i| z + (0..i).map(|j| drive[j] * prob.moments[i - j]).sum::<f64>())
            .collect();
        residual = cur.iter().zip(&next).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
        cur = next;
        if residual <= PICARD_TOL {
            return Ok(ControlledPath { values: cur, iterations: sweep - 1 });
        }
    }
    Err(Error::Numeric(format!(
        "Picard iteration did not converge in {PICARD_MAX_ITER} sweeps (residual {residual:e})"
    )))
}

/// Optimizer settings for [`rate_function`].
#[derive(Debug, Clone, Default)]
pub struct OptConfig {
    pub bfgs: BfgsConfig,
    /// Extra start in `h`-units, e.g. the optimum at a neighbouring `y`.
    pub warm_start: Option<Vec<f64>>,
}

/// Outcome of one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartReport {
    pub label: &'static str,
    pub value: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Minimized objective with its control.
#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub y: f64,
    pub value: f64,
    /// Optimal control `h` on the cells.
    pub control: Vec<f64>,
    pub converged: bool,
    pub n_starts: usize,
    pub best_start: usize,
    pub grad_norm: f64,
    pub starts: Vec<StartReport>,
}

/// `I(y)` by multi-start quasi-Newton descent.
///
/// Starts, in order: `h = 0`, `h = +a`, `h = -a` with `a = |y| / (2 |f(x_0)|)`,
/// then the warm start if given. The minimum over admissible starts is
/// reported; ties go to the earlier start.
pub fn rate_function(y: f64, prob: &LdpProblem, cfg: &OptConfig) -> Result<RateResult> {
    let n = prob.n_grid;
    let sq = (n as f64).sqrt();
    let f0 = prob.f.eval(0, prob.start(), 0.0).abs().max(1e-3);
    let a = 0.5 * y.abs() / f0;
    let mut starts: Vec<(&'static str, Vec<f64>)> = vec![
        ("zero", vec![0.0; n]),
        ("plus", vec![a / sq; n]),
        ("minus", vec![-a / sq; n]),
    ];
    if let Some(w) = &cfg.warm_start {
        if w.len() != n {
            return Err(Error::Contract(format!("warm start has {} cells, problem has {n}", w.len())));
        }
        starts.push(("warm", w.iter().map(|v| v / sq).collect()));
    }
    let outcomes: Vec<Option<BfgsOutcome>> = starts
        .par_iter()
        .map(|(_, x0)| minimize(|x| prob.objective(y, x), x0, &cfg.bfgs))
        .collect();
    let reports = starts
        .iter()
        .zip(&outcomes)
        .map(|((label, _), o)| StartReport {
            label,
            value: o.as_ref().map(|o| o.value),
            converged: o.as_ref().is_some_and(|o| o.converged),
            iterations: o.as_ref().map_or(0, |o| o.iterations),
            grad_norm: o.as_ref().map_or(f64::NAN, |o| o.grad_norm()),
        })
        .collect();
    let best = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.as_ref().map(|o| (i, o)))
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)));
    let Some((best_start, best)) = best else {
        return Err(Error::Degenerate(format!(
            "every start has I2 below {I2_FLOOR:e} at y = {y}; f vanishes along the controlled paths"
        )));
    };
    Ok(RateResult {
        y,
        value: best.value,
        control: best.x.iter().map(|v| v * sq).collect(),
        converged: best.converged,
        n_starts: starts.len(),
        best_start,
        grad_norm: best.grad_norm(),
        starts: reports,
    })
}

/// Rate function on a list of `y`, each warm-started from the previous optimum.
pub fn rate_curve(ys: &[f64], prob: &LdpProblem, bfgs: BfgsConfig) -> Result<Vec<RateResult>> {
    let mut out: Vec<RateResult> = Vec::with_capacity(ys.len());
    for &y in ys {
        let cfg = OptConfig { bfgs, warm_start: out.last().map(|r| r.control.clone()) };
        out.push(rate_function(y, prob, &cfg)?);
    }
    Ok(out)
}

pub const RATE_HEADER: &str = "y,I,converged,n_starts,best_start,grad_norm";

pub fn write_rate_csv<W: Write>(mut out: W, results: &[RateResult]) -> Result<()> {
    writeln!(out, "{RATE_HEADER}")?;
    for r in results {
        writeln!(out, "{},{},{},{},{},{}", r.y, r.value, r.converged, r.n_starts, r.best_start, r.grad_norm)?;
    }
    Ok(())
}

/// Rough Heston implied volatility skew `rho eta / (2 sqrt(v0)) c_H t^{H - 1/2}`.
pub fn skew_formula(h: Hurst, rho: f64, eta: f64, v0: f64, t: f64) -> Result<f64> {
    if !(v0 > 0.0) {
        return Err(Error::Domain(format!("spot variance must be positive, got {v0}")));
    }
    skew_generic(h, rho, eta * v0.sqrt(), 0.5 / v0, t)
}

/// Non-simple model skew `rho u(z) (f'(z) / f(z)) c_H t^{H - 1/2}`.
pub fn skew_generic(h: Hurst, rho: f64, u_at_z: f64, fprime_over_f: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("maturity must be positive, got {t}")));
    }
    Ok(rho * u_at_z * fprime_over_f * c_h_constant(h) * t.powf(h.value() - 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hurst(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    #[test]
    fn controlled_path_examples() {
        let h = hurst(0.3);
        let p = LdpProblem::simple(FunctionFamily::exp(), 0.0, h, 16).unwrap();
        assert!(controlled_path(&p, &[0.0; 16]).unwrap().values.iter().all(|&v| v == 0.0));
        let a = 0.7;
        let path = controlled_path(&p, &[a; 16]).unwrap();
        for (i, v) in path.values.iter().enumerate() {
            let t = i as f64 / 16.0;
            assert!((v - a * h.moment_scale() * t.powf(h.alpha())).abs() < 1e-13);
        }
        let q = LdpProblem::non_simple(FunctionFamily::exp(), FunctionFamily::constant(1.0), 0.0, 0.0, h, 16).unwrap();
        let ctl: Vec<f64> = (0..16).map(|i| (i as f64).cos()).collect();
        let zp = controlled_path(&q, &ctl).unwrap();
        assert_eq!(zp.iterations, 1);
        let hp = controlled_path(&p, &ctl).unwrap();
        for (a, b) in zp.values.iter().zip(&hp.values) {
            assert!((a - b).abs() < 1e-14);
        }
        let r = LdpProblem::non_simple(FunctionFamily::exp(), FunctionFamily::constant(2.0), 0.3, 0.0, h, 16).unwrap();
        assert!(controlled_path(&r, &[0.0; 16]).unwrap().values.iter().all(|&v| v == 0.3));
        assert!(controlled_path(&p, &[0.0; 3]).is_err());
    }

    #[test]
    fn picard_matches_forward_substitution() {
        let q = LdpProblem::non_simple(
            FunctionFamily::exp(),
            FunctionFamily::linear(0.4, 0.3),
            0.1,
            -0.5,
            hurst(0.3),
            32,
        )
        .unwrap();
        let ctl: Vec<f64> = (0..32).map(|i| 0.5 * (i as f64 * 0.3).sin()).collect();
        let zp = controlled_path(&q, &ctl).unwrap();
        assert!(zp.iterations > 1);
        for (a, b) in zp.values.iter().zip(&q.forward_path(&ctl)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let problems = [
            LdpProblem::simple(FunctionFamily::bergomi(0.2, 1.5), -0.7, hurst(0.2), 12).unwrap(),
            LdpProblem::non_simple(FunctionFamily::exp(), FunctionFamily::linear(0.4, 0.3), 0.1, 0.6, hurst(0.35), 12)
                .unwrap(),
        ];
        let x: Vec<f64> = (0..12).map(|i| 0.3 * (i as f64 * 0.7).cos()).collect();
        for p in &problems {
            let (_, g) = p.objective(0.15, &x).unwrap();
            for k in 0..12 {
                let step = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += step;
                xm[k] -= step;
                let fd = (p.objective(0.15, &xp).unwrap().0 - p.objective(0.15, &xm).unwrap().0) / (2.0 * step);
                assert!((fd - g[k]).abs() < 1e-7 * g[k].abs().max(1.0), "k={k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn constant_volatility_oracle() {
        for n in [16usize, 64] {
            for &sigma in &[0.1, 0.2, 0.4] {
                for &rho in &[-0.8, 0.0, 0.5] {
                    let p = LdpProblem::simple(FunctionFamily::constant(sigma), rho, hurst(0.3), n).unwrap();
                    for &y in &[-0.2, 0.05, 0.3] {
                        let r = rate_function(y, &p, &OptConfig::default()).unwrap();
                        let exact = y * y / (2.0 * sigma * sigma * (1.0 + rho * rho));
                        assert!((r.value - exact).abs() <= 1e-3 * exact, "{sigma} {rho} {y}: {}", r.value);
                        assert!(r.converged);
                    }
                }
            }
        }
    }

    #[test]
    fn rate_function_basic_properties() {
        let p = LdpProblem::simple(FunctionFamily::bergomi(0.2, 2.0), -0.8, hurst(0.1), 32).unwrap();
        let zero = rate_function(0.0, &p, &OptConfig::default()).unwrap();
        assert!(zero.value.abs() < 1e-10);
        for y in [-0.3, -0.1, 0.05, 0.2] {
            let r = rate_function(y, &p, &OptConfig::default()).unwrap();
            assert!(r.value >= 0.0);
            let at_zero = p.objective(y, &[0.0; 32]).unwrap().0;
            assert!(r.value <= at_zero + 1e-12);
        }
        let sym = LdpProblem::simple(FunctionFamily::exp(), 0.0, hurst(0.3), 16).unwrap();
        for y in [0.1, 0.4] {
            let a = rate_function(y, &sym, &OptConfig::default()).unwrap().value;
            let b = rate_function(-y, &sym, &OptConfig::default()).unwrap().value;
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn non_simple_reduction() {
        for &y in &[-0.2, 0.1, 0.3] {
            let s = LdpProblem::simple(FunctionFamily::bergomi(0.25, 1.0), -0.6, hurst(0.25), 24).unwrap();
            let ns = LdpProblem::non_simple(FunctionFamily::bergomi(0.25, 1.0), FunctionFamily::constant(1.0), 0.0, -0.6, hurst(0.25), 24)
                .unwrap();
            let a = rate_function(y, &s, &OptConfig::default()).unwrap().value;
            let b = rate_function(y, &ns, &OptConfig::default()).unwrap().value;
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_volatility_is_an_error() {
        let p = LdpProblem::simple(FunctionFamily::constant(0.0), 0.3, hurst(0.3), 8).unwrap();
        assert!(matches!(rate_function(0.1, &p, &OptConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn curve_and_csv() {
        let p = LdpProblem::simple(FunctionFamily::bergomi(0.2, 2.0), -0.8, hurst(0.3), 16).unwrap();
        let rs = rate_curve(&[0.0, 0.1, 0.2], &p, BfgsConfig::default()).unwrap();
        assert_eq!(rs[1].n_starts, 4);
        let mut buf = Vec::new();
        write_rate_csv(&mut buf, &rs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("y,I,converged,n_starts,best_start,grad_norm\n0,0,true,3,0,0\n"), "{text}");
    }

    #[test]
    fn skew_examples() {
        let half = hurst(0.5);
        let s = skew_formula(half, -0.7, 0.4, 0.04, 0.3).unwrap();
        assert!((s - (-0.7 * 0.4 / (4.0 * 0.2))).abs() < 1e-15);
        assert_eq!(skew_formula(hurst(0.1), 0.0, 0.4, 0.04, 0.01).unwrap(), 0.0);
        let h = hurst(0.2);
        let (rho, eta, z, t): (f64, f64, f64, f64) = (-0.6, 0.5, 0.09, 0.02);
        let generic = skew_generic(h, rho, eta * z.sqrt(), 1.0 / (2.0 * z), t).unwrap();
        let heston = skew_formula(h, rho, eta, z, t).unwrap();
        assert!((generic - heston).abs() < 1e-14 * heston.abs());
        assert!(skew_formula(h, rho, eta, 0.0, t).is_err());
        assert!(skew_generic(h, rho, 1.0, 1.0, 0.0).is_err());
    }
}
