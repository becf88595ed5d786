//! Renormalized Wong-Zakai integral estimators on the Haar construction.
//!
//! All integrals are closed trapezoid rules applied cell by cell: each Haar
//! cell carries its own `d` nodes including both endpoints, so the kink of
//! `W_hat` and the reset of the renormalization function at every grid point
//! are never straddled.

use crate::error::{Error, Result};
use crate::functions::SmoothFunction;
use crate::kernel::{cell_index, renorm_constant, HaarLevel, Hurst, RenormScheme};
use crate::noise::{fbm_eval, FbmBasis, HaarWhiteNoise};

/// Trapezoid resolution inside each Haar cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadratureConfig {
    /// Target step `Delta`; the per-cell node count is `ceil(eps / Delta) + 1`.
    Step(f64),
    /// Exactly `d >= 2` nodes per cell.
    PointsPerCell(usize),
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig::Step(DEFAULT_STEP)
    }
}

/// `2^-12`.
pub const DEFAULT_STEP: f64 = 1.0 / 4096.0;

impl QuadratureConfig {
    /// Nodes per cell at level `lvl`.
    pub fn points(self, lvl: HaarLevel) -> Result<usize> {
        match self {
            QuadratureConfig::PointsPerCell(d) if d >= 2 => Ok(d),
            QuadratureConfig::PointsPerCell(d) => {
                Err(Error::Domain(format!("need at least 2 points per cell, got {d}")))
            }
            QuadratureConfig::Step(delta) if delta > 0.0 && delta.is_finite() => {
                let ratio = (lvl.eps() / delta * (1.0 - 1e-12)).ceil().max(1.0);
                Ok(ratio as usize + 1)
            }
            QuadratureConfig::Step(delta) => Err(Error::Domain(format!("step must be positive, got {delta}"))),
        }
    }

    /// Effective step `eps / (d - 1)` at level `lvl`.
    pub fn step(self, lvl: HaarLevel) -> Result<f64> {
        Ok(lvl.eps() / (self.points(lvl)? - 1) as f64)
    }
}

/// Per-sample estimator values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOutput {
    pub i_tilde: f64,
    pub v_hat: f64,
    pub j_tilde: Option<f64>,
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-cell geometry handed to the integrand callbacks.
struct Cell<'a> {
    start: f64,
    width: f64,
    z: f64,
    w_hat: &'a [f64],
    renorm: &'a [f64],
}

/// Precomputed tables for one `(H, N, d)` triple; shareable across threads.
#[derive(Debug)]
pub struct EstimatorContext {
    basis: FbmBasis,
    renorm_nonconstant: Vec<f64>,
    renorm_constant: Vec<f64>,
    weights: Vec<f64>,
}

impl EstimatorContext {
    pub fn new(hurst: Hurst, level: HaarLevel, quad: QuadratureConfig) -> Result<Self> {
        let d = quad.points(level)?;
        let basis = FbmBasis::new(hurst, level, d)?;
        let mut weights = vec![1.0; d];
        weights[0] = 0.5;
        weights[d - 1] = 0.5;
        Ok(Self {
            renorm_nonconstant: basis.renorm_on_nodes(RenormScheme::NonConstant),
            renorm_constant: basis.renorm_on_nodes(RenormScheme::Constant),
            basis,
            weights,
        })
    }

    pub fn hurst(&self) -> Hurst {
        self.basis.hurst()
    }

    pub fn level(&self) -> HaarLevel {
        self.basis.level()
    }

    pub fn points(&self) -> usize {
        self.basis.points()
    }

    pub fn basis(&self) -> &FbmBasis {
        &self.basis
    }

    fn renorm(&self, scheme: RenormScheme) -> &[f64] {
        match scheme {
            RenormScheme::NonConstant => &self.renorm_nonconstant,
            RenormScheme::Constant => &self.renorm_constant,
        }
    }

    /// Visit every (possibly partial) cell of `[0, t_end)` in time order.
    fn for_each_cell<F>(&self, noise: &HaarWhiteNoise, scheme: RenormScheme, t_end: f64, mut visit: F) -> Result<()>
    where
        F: FnMut(&Cell<'_>),
    {
        let lvl = self.level();
        if noise.level() != lvl {
            return Err(Error::Contract(format!(
                "sample is at level {}, estimator expects {}",
                noise.level(),
                lvl
            )));
        }
        if !(t_end > 0.0 && t_end <= 1.0) {
            return Err(Error::Domain(format!("t_end must lie in (0, 1], got {t_end}")));
        }
        let d = self.points();
        let eps = lvl.eps();
        let full = (cell_index(lvl, t_end).max(0) as usize).min(lvl.cells());
        let renorm = self.renorm(scheme);
        let mut nodes = vec![0.0; full * d];
        self.basis.evaluate(noise.coeffs(), full, &mut nodes);
        for k in 0..full {
            visit(&Cell {
                start: k as f64 * eps,
                width: eps,
                z: noise.coeffs()[k],
                w_hat: &nodes[k * d..(k + 1) * d],
                renorm,
            });
        }
        let start = full as f64 * eps;
        let tau = t_end - start;
        if full < lvl.cells() && tau > 0.0 {
            let h = self.hurst();
            let theta = self.basis.theta();
            let w_hat = theta
                .iter()
                .map(|&th| fbm_eval(noise, h, start + th * tau))
                .collect::<Result<Vec<_>>>()?;
            let partial_renorm: Vec<f64> = match scheme {
                RenormScheme::NonConstant => theta
                    .iter()
                    .map(|&th| h.moment_scale() * lvl.cells() as f64 * (th * tau).powf(h.alpha()))
                    .collect(),
                RenormScheme::Constant => vec![renorm_constant(h, lvl); d],
            };
            visit(&Cell { start, width: tau, z: noise.coeffs()[full], w_hat: &w_hat, renorm: &partial_renorm });
        }
        Ok(())
    }

    fn check_order<F: SmoothFunction + ?Sized>(f: &F, needed: usize) -> Result<()> {
        if f.max_order() < needed {
            return Err(Error::Contract(format!(
                "`{}` supports derivatives up to order {}, estimator needs {}",
                f.describe(),
                f.max_order(),
                needed
            )));
        }
        Ok(())
    }

    /// `I~` and `V` in one pass over the nodes.
    pub fn estimate<F: SmoothFunction + ?Sized>(
        &self,
        noise: &HaarWhiteNoise,
        f: &F,
        scheme: RenormScheme,
        t_end: f64,
    ) -> Result<EstimatorOutput> {
        Self::check_order(f, 1)?;
        let scale = self.level().sqrt_scale();
        let d = self.points();
        let mut i_sum = CompensatedSum::default();
        let mut v_sum = CompensatedSum::default();
        self.for_each_cell(noise, scheme, t_end, |cell| {
            let step = cell.width / (d - 1) as f64;
            let wdot = scale * cell.z;
            let mut ic = 0.0;
            let mut vc = 0.0;
            for j in 0..d {
                let t = cell.start + step * j as f64;
                let (fv, fp) = f.value_and_slope(cell.w_hat[j], t);
                let w = self.weights[j];
                ic += w * (wdot * fv - cell.renorm[j] * fp);
                vc += w * fv * fv;
            }
            i_sum.add(step * ic);
            v_sum.add(step * vc);
        })?;
        Ok(EstimatorOutput { i_tilde: i_sum.value(), v_hat: v_sum.value().max(0.0), j_tilde: None })
    }

    /// Renormalized integral `int f(W_hat) dW - int C f'(W_hat) dr` on `[0, t_end]`.
    pub fn itilde<F: SmoothFunction + ?Sized>(
        &self,
        noise: &HaarWhiteNoise,
        f: &F,
        scheme: RenormScheme,
        t_end: f64,
    ) -> Result<f64> {
        Ok(self.estimate(noise, f, scheme, t_end)?.i_tilde)
    }

    /// Total variance `int_0^{t_end} f(W_hat)^2 dr`.
    pub fn vhat<F: SmoothFunction + ?Sized>(&self, noise: &HaarWhiteNoise, f: &F, t_end: f64) -> Result<f64> {
        let d = self.points();
        let mut v_sum = CompensatedSum::default();
        self.for_each_cell(noise, RenormScheme::NonConstant, t_end, |cell| {
            let step = cell.width / (d - 1) as f64;
            let vc: f64 = (0..d)
                .map(|j| {
                    let fv = f.eval(0, cell.w_hat[j], cell.start + step * j as f64);
                    self.weights[j] * fv * fv
                })
                .sum();
            v_sum.add(step * vc);
        })?;
        Ok(v_sum.value().max(0.0))
    }

    /// Local Taylor estimator of order `m_level`, expanded at each cell's left endpoint.
    pub fn jtilde<F: SmoothFunction + ?Sized>(
        &self,
        noise: &HaarWhiteNoise,
        f: &F,
        scheme: RenormScheme,
        m_level: usize,
        t_end: f64,
    ) -> Result<f64> {
        Self::check_order(f, m_level)?;
        let scale = self.level().sqrt_scale();
        let d = self.points();
        let mut sum = CompensatedSum::default();
        let mut deriv = vec![0.0; m_level + 1];
        let mut moments = vec![0.0; m_level + 1];
        let mut renorm_moments = vec![0.0; m_level + 1];
        self.for_each_cell(noise, scheme, t_end, |cell| {
            let step = cell.width / (d - 1) as f64;
            let x0 = cell.w_hat[0];
            for (m, dv) in deriv.iter_mut().enumerate() {
                *dv = f.eval(m, x0, cell.start);
            }
            moments.fill(0.0);
            renorm_moments.fill(0.0);
            for j in 0..d {
                let dx = cell.w_hat[j] - x0;
                let w = self.weights[j] * step;
                let mut p = 1.0;
                for m in 0..=m_level {
                    moments[m] += w * p;
                    if m < m_level {
                        renorm_moments[m + 1] += w * cell.renorm[j] * p;
                    }
                    p *= dx;
                }
            }
            let mut fact = 1.0;
            let mut cell_sum = 0.0;
            for m in 0..=m_level {
                if m > 0 {
                    // fact is (m-1)! here
                    cell_sum -= deriv[m] / fact * renorm_moments[m];
                    fact *= m as f64;
                }
                cell_sum += deriv[m] / fact * scale * cell.z * moments[m];
            }
            sum.add(cell_sum);
        })?;
        Ok(sum.value())
    }

    /// Left-point Ito sum `sum_l f(W_hat(t_l)) (W(t_{l+1} ^ t_end) - W(t_l))`.
    pub fn ito_reference_sum<F: SmoothFunction + ?Sized>(
        &self,
        noise: &HaarWhiteNoise,
        f: &F,
        t_end: f64,
    ) -> Result<f64> {
        let scale = self.level().sqrt_scale();
        let mut sum = CompensatedSum::default();
        self.for_each_cell(noise, RenormScheme::NonConstant, t_end, |cell| {
            sum.add(f.eval(0, cell.w_hat[0], cell.start) * scale * cell.z * cell.width);
        })?;
        Ok(sum.value())
    }
}

/// One-shot [`EstimatorContext::itilde`]; build a context directly when evaluating many samples.
pub fn itilde<F: SmoothFunction + ?Sized>(
    noise: &HaarWhiteNoise,
    h: Hurst,
    f: &F,
    scheme: RenormScheme,
    q: QuadratureConfig,
    t_end: f64,
) -> Result<f64> {
    EstimatorContext::new(h, noise.level(), q)?.itilde(noise, f, scheme, t_end)
}

/// One-shot [`EstimatorContext::jtilde`].
pub fn jtilde<F: SmoothFunction + ?Sized>(
    noise: &HaarWhiteNoise,
    h: Hurst,
    f: &F,
    scheme: RenormScheme,
    m_level: usize,
    q: QuadratureConfig,
    t_end: f64,
) -> Result<f64> {
    EstimatorContext::new(h, noise.level(), q)?.jtilde(noise, f, scheme, m_level, t_end)
}

/// One-shot [`EstimatorContext::vhat`].
pub fn vhat<F: SmoothFunction + ?Sized>(
    noise: &HaarWhiteNoise,
    h: Hurst,
    f: &F,
    q: QuadratureConfig,
    t_end: f64,
) -> Result<f64> {
    EstimatorContext::new(h, noise.level(), q)?.vhat(noise, f, t_end)
}

/// One-shot [`EstimatorContext::ito_reference_sum`].
pub fn ito_reference_sum<F: SmoothFunction + ?Sized>(
    noise: &HaarWhiteNoise,
    h: Hurst,
    f: &F,
    t_end: f64,
) -> Result<f64> {
    EstimatorContext::new(h, noise.level(), QuadratureConfig::PointsPerCell(2))?.ito_reference_sum(noise, f, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::FunctionFamily;
    use crate::mc::Moments;

    fn hurst(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    fn lvl(n: u32) -> HaarLevel {
        HaarLevel::new(n).unwrap()
    }

    #[test]
    fn step_to_points() {
        assert_eq!(QuadratureConfig::Step(1.0 / 4096.0).points(lvl(8)).unwrap(), 17);
        assert_eq!(QuadratureConfig::Step(1.0 / 4096.0).points(lvl(12)).unwrap(), 2);
        assert_eq!(QuadratureConfig::Step(1.0 / 4096.0).points(lvl(14)).unwrap(), 2);
        assert_eq!(QuadratureConfig::Step(0.3).points(lvl(0)).unwrap(), 5);
        assert!(QuadratureConfig::PointsPerCell(1).points(lvl(3)).is_err());
        assert!(QuadratureConfig::Step(0.0).points(lvl(3)).is_err());
    }

    #[test]
    fn constant_f_is_exact() {
        let f = FunctionFamily::constant(0.7);
        for &n in &[0u32, 3, 5] {
            let ctx = EstimatorContext::new(hurst(0.2), lvl(n), QuadratureConfig::PointsPerCell(4)).unwrap();
            let s = HaarWhiteNoise::generate(lvl(n), 5, 1);
            for &t_end in &[1.0, 0.5, 0.3] {
                let q = (t_end * lvl(n).cells() as f64).floor() as usize;
                let eps = lvl(n).eps();
                let mut expect: f64 = s.coeffs()[..q].iter().sum::<f64>() * eps;
                if q < lvl(n).cells() {
                    expect += s.coeffs()[q] * (t_end - q as f64 * eps);
                }
                expect *= 0.7 * lvl(n).sqrt_scale();
                for scheme in [RenormScheme::NonConstant, RenormScheme::Constant] {
                    let it = ctx.itilde(&s, &f, scheme, t_end).unwrap();
                    assert!((it - expect).abs() < 1e-13, "n={n} t={t_end}: {it} vs {expect}");
                }
                let v = ctx.vhat(&s, &f, t_end).unwrap();
                assert!((v - 0.49 * t_end).abs() < 1e-14);
                let j = ctx.jtilde(&s, &f, RenormScheme::NonConstant, 0, t_end).unwrap();
                assert!((j - expect).abs() < 1e-13);
                let ito = ctx.ito_reference_sum(&s, &f, t_end).unwrap();
                assert!((ito - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn level_zero_ito_sum() {
        let s = HaarWhiteNoise::generate(lvl(0), 2, 2);
        let f = FunctionFamily::linear(0.4, 3.0);
        let v = ito_reference_sum(&s, hurst(0.3), &f, 1.0).unwrap();
        assert_eq!(v, 0.4 * s.coeffs()[0]);
    }

    #[test]
    fn jtilde_is_exact_for_polynomials() {
        let f = FunctionFamily::Polynomial(vec![0.0, 0.0, 1.0]);
        let g = FunctionFamily::Polynomial(vec![0.3, -1.0, 0.5, 0.2]);
        let ctx = EstimatorContext::new(hurst(0.3), lvl(5), QuadratureConfig::PointsPerCell(64)).unwrap();
        for id in 0..5 {
            let s = HaarWhiteNoise::generate(lvl(5), 9, id);
            for scheme in [RenormScheme::NonConstant, RenormScheme::Constant] {
                let i = ctx.itilde(&s, &f, scheme, 1.0).unwrap();
                let j = ctx.jtilde(&s, &f, scheme, 2, 1.0).unwrap();
                assert!((i - j).abs() <= 1e-8 * i.abs().max(1.0), "{i} {j}");
                let i = ctx.itilde(&s, &g, scheme, 0.61).unwrap();
                let j = ctx.jtilde(&s, &g, scheme, 3, 0.61).unwrap();
                assert!((i - j).abs() <= 1e-8 * i.abs().max(1.0), "{i} {j}");
            }
        }
        let s = HaarWhiteNoise::generate(lvl(5), 9, 0);
        let sq = FunctionFamily::sqrt(1e-3).unwrap();
        assert!(ctx.jtilde(&s, &sq, RenormScheme::NonConstant, 3, 1.0).is_err());
    }

    #[test]
    fn rejects_mismatched_level_and_time() {
        let ctx = EstimatorContext::new(hurst(0.3), lvl(4), QuadratureConfig::PointsPerCell(3)).unwrap();
        let f = FunctionFamily::exp();
        let s = HaarWhiteNoise::generate(lvl(5), 0, 0);
        assert!(ctx.itilde(&s, &f, RenormScheme::NonConstant, 1.0).is_err());
        let s = HaarWhiteNoise::generate(lvl(4), 0, 0);
        assert!(ctx.itilde(&s, &f, RenormScheme::NonConstant, 0.0).is_err());
        assert!(ctx.itilde(&s, &f, RenormScheme::NonConstant, 1.5).is_err());
    }

    #[test]
    fn vhat_is_monotone_in_time() {
        let ctx = EstimatorContext::new(hurst(0.1), lvl(6), QuadratureConfig::PointsPerCell(5)).unwrap();
        let f = FunctionFamily::exp();
        for id in 0..10 {
            let s = HaarWhiteNoise::generate(lvl(6), 4, id);
            let mut prev = 0.0;
            for k in 1..=40 {
                let v = ctx.vhat(&s, &f, k as f64 / 40.0).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn linear_f_has_zero_mean() {
        // E[f(W_hat) W'] equals C E[f'] pointwise, so the mean vanishes for every level
        let f = FunctionFamily::linear(0.0, 1.0);
        for &(h, n) in &[(0.1, 4u32), (0.3, 6)] {
            let ctx = EstimatorContext::new(hurst(h), lvl(n), QuadratureConfig::PointsPerCell(5)).unwrap();
            let mut m = Moments::default();
            for id in 0..100_000 {
                let s = HaarWhiteNoise::generate(lvl(n), 11, id);
                m.push(ctx.itilde(&s, &f, RenormScheme::NonConstant, 1.0).unwrap());
            }
            assert!(m.mean().abs() < 3.0 * m.stderr(), "H={h}: {} +- {}", m.mean(), m.stderr());
        }
    }

    #[test]
    fn trapezoid_refinement_is_second_order() {
        let f = FunctionFamily::exp();
        let s = HaarWhiteNoise::generate(lvl(3), 1, 0);
        let val = |d| {
            EstimatorContext::new(hurst(0.3), lvl(3), QuadratureConfig::PointsPerCell(d))
                .unwrap()
                .itilde(&s, &f, RenormScheme::NonConstant, 1.0)
                .unwrap()
        };
        let (a, b, c) = (val(9), val(17), val(33));
        let ratio = (a - b).abs() / (b - c).abs();
        // C^eps has a t^{H+1/2} singularity at each left endpoint, so the order is H + 3/2
        assert!(ratio > 2.0_f64.powf(1.5), "{ratio}");
    }

    #[test]
    fn compensated_sum() {
        let mut s = CompensatedSum::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }
}
