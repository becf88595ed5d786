//! Black-Scholes primitives, conditional mixing and Monte Carlo call prices.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorContext, QuadratureConfig};
use crate::functions::FunctionFamily;
use crate::kernel::{HaarLevel, Hurst, RenormScheme};
use crate::mc::{sample_moments, Moments};
use crate::noise::HaarWhiteNoise;

/// Spot, strike and spot-vol correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketSpec {
    pub s0: f64,
    pub k: f64,
    pub rho: f64,
}

impl MarketSpec {
    pub fn new(s0: f64, k: f64, rho: f64) -> Result<Self> {
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::Domain(format!("spot must be positive, got {s0}")));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("strike must be nonnegative, got {k}")));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("correlation must lie in [-1, 1], got {rho}")));
        }
        Ok(Self { s0, k, rho })
    }

    /// `sqrt(1 - rho^2)`.
    pub fn rho_bar(&self) -> f64 {
        (1.0 - self.rho * self.rho).max(0.0).sqrt()
    }
}

/// Call price `E(S0 exp(sqrt(v) Z - v/2) - K)^+` for total variance `v`.
pub fn black_scholes_call(s0: f64, k: f64, total_var: f64) -> Result<f64> {
    if !(total_var >= 0.0) {
        return Err(Error::Domain(format!("total variance must be nonnegative, got {total_var}")));
    }
    if !(s0 > 0.0) || !(k >= 0.0) {
        return Err(Error::Domain(format!("need S0 > 0 and K >= 0, got S0={s0}, K={k}")));
    }
    if !s0.is_finite() || !total_var.is_finite() {
        return Err(Error::Numeric(format!("non-finite Black-Scholes input S0={s0}, v={total_var}")));
    }
    let intrinsic = (s0 - k).max(0.0);
    if k == 0.0 {
        return Ok(s0);
    }
    if total_var == 0.0 {
        return Ok(intrinsic);
    }
    let sd = total_var.sqrt();
    let d1 = ((s0 / k).ln() + 0.5 * total_var) / sd;
    let d2 = d1 - sd;
    let n = Normal::standard();
    let price = s0 * n.cdf(d1) - k * n.cdf(d2);
    Ok(price.clamp(intrinsic, s0))
}

/// Residual-variance convention inside the mixing function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiVariant {
    /// `C_BS(S0 exp(rho I - rho^2 V / 2), K, (1 - rho^2) V)`.
    #[default]
    Derived,
    /// Same, but with residual total variance `(1 - rho^2) V / 2`.
    PaperSec6,
}

impl PsiVariant {
    pub fn name(self) -> &'static str {
        match self {
            PsiVariant::Derived => "derived",
            PsiVariant::PaperSec6 => "paper-sec6",
        }
    }
}

impl fmt::Display for PsiVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PsiVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "derived" => Ok(PsiVariant::Derived),
            "paper-sec6" => Ok(PsiVariant::PaperSec6),
            other => Err(Error::Config(format!("unknown psi variant `{other}` (expected derived|paper-sec6)"))),
        }
    }
}

/// Conditional call price given the integral `I` and total variance `V`.
pub fn psi(i_val: f64, v_val: f64, mkt: &MarketSpec) -> Result<f64> {
    psi_with(i_val, v_val, mkt, PsiVariant::Derived)
}

pub fn psi_with(i_val: f64, v_val: f64, mkt: &MarketSpec, variant: PsiVariant) -> Result<f64> {
    if !(v_val >= 0.0) {
        return Err(Error::Domain(format!("total variance must be nonnegative, got {v_val}")));
    }
    let rho = mkt.rho;
    let spot = mkt.s0 * (rho * i_val - 0.5 * rho * rho * v_val).exp();
    let mut residual = (1.0 - rho * rho).max(0.0) * v_val;
    if variant == PsiVariant::PaperSec6 {
        residual *= 0.5;
    }
    if spot == 0.0 {
        return Ok(0.0);
    }
    black_scholes_call(spot, mkt.k, residual)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub value: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub n_samples: u64,
    pub seed: u64,
}

impl MCEstimate {
    pub fn from_moments(m: &Moments, seed: u64) -> Self {
        let value = m.mean();
        let stderr = m.stderr();
        Self { value, stderr, ci95: (value - 1.96 * stderr, value + 1.96 * stderr), n_samples: m.count(), seed }
    }
}

/// A simple rough volatility model `sigma_t = f(W_hat_t)` and its numerics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleModel {
    pub hurst: Hurst,
    pub f: FunctionFamily,
    pub scheme: RenormScheme,
    pub quad: QuadratureConfig,
    pub psi: PsiVariant,
}

impl SimpleModel {
    pub fn new(hurst: Hurst, f: FunctionFamily) -> Self {
        Self { hurst, f, scheme: RenormScheme::default(), quad: QuadratureConfig::default(), psi: PsiVariant::default() }
    }

    pub fn with_scheme(mut self, scheme: RenormScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_quadrature(mut self, quad: QuadratureConfig) -> Self {
        self.quad = quad;
        self
    }

    pub fn with_psi(mut self, psi: PsiVariant) -> Self {
        self.psi = psi;
        self
    }

    /// `Psi(I~, V)` for one noise sample.
    pub fn conditional_price(&self, ctx: &EstimatorContext, noise: &HaarWhiteNoise, mkt: &MarketSpec) -> Result<f64> {
        let est = ctx.estimate(noise, &self.f, self.scheme, 1.0)?;
        psi_with(est.i_tilde, est.v_hat, mkt, self.psi)
    }
}

/// Monte Carlo call price at maturity 1 over `m_samples` Haar samples.
pub fn price_call_mc(
    mkt: &MarketSpec,
    model: &SimpleModel,
    lvl: HaarLevel,
    m_samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    if m_samples < 2 {
        return Err(Error::Contract(format!("standard error needs at least 2 samples, got {m_samples}")));
    }
    let ctx = EstimatorContext::new(model.hurst, lvl, model.quad)?;
    let m = sample_moments(m_samples, 1, |id, out| {
        let noise = HaarWhiteNoise::generate(lvl, seed, id);
        out[0] = model.conditional_price(&ctx, &noise, mkt)?;
        Ok(())
    })?;
    Ok(MCEstimate::from_moments(&m[0], seed))
}

/// CSV header for price rows.
pub const PRICE_HEADER: &str = "N,eps,price,stderr,ci_lo,ci_hi,M,seed,f,scheme";

/// Quote a CSV field if it contains a separator.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_price_row<W: Write>(mut out: W, lvl: HaarLevel, est: &MCEstimate, model: &SimpleModel) -> Result<()> {
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        lvl.n(),
        lvl.eps(),
        est.value,
        est.stderr,
        est.ci95.0,
        est.ci95.1,
        est.n_samples,
        est.seed,
        csv_field(&model.f.to_string()),
        model.scheme
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bs_reference_values() {
        let atm = black_scholes_call(100.0, 100.0, 0.04).unwrap();
        // 100 (2 Phi(0.1) - 1) with Phi(0.1) = 0.539827837277029
        assert!((atm - 7.965_567_455_405_8).abs() < 1e-9, "{atm}");
        assert_eq!(black_scholes_call(3.0, 0.0, 0.7).unwrap(), 3.0);
        assert_eq!(black_scholes_call(1.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(black_scholes_call(1.0, 1.0, 1e-14).unwrap() < 1e-7);
        assert!(black_scholes_call(1.0, 1.0, -1e-3).is_err());
    }

    #[test]
    fn bs_monotonicity_and_bounds() {
        let grid = [0.0, 0.01, 0.04, 0.2, 1.0, 4.0];
        let strikes = [0.0, 0.5, 0.9, 1.0, 1.1, 2.0, 10.0];
        let spots = [0.2, 0.8, 1.0, 1.3, 5.0];
        for &s in &spots {
            for &k in &strikes {
                let mut prev = -1.0;
                for &v in &grid {
                    let c = black_scholes_call(s, k, v).unwrap();
                    assert!(c >= prev - 1e-15);
                    assert!(c >= (s - k).max(0.0) - 1e-15 && c <= s + 1e-15);
                    prev = c;
                }
            }
        }
        for &v in &grid {
            for &k in &strikes {
                let mut prev = -1.0;
                for &s in &spots {
                    let c = black_scholes_call(s, k, v).unwrap();
                    assert!(c >= prev - 1e-15);
                    prev = c;
                }
            }
            for &s in &spots {
                let mut prev = f64::INFINITY;
                for &k in &strikes {
                    let c = black_scholes_call(s, k, v).unwrap();
                    assert!(c <= prev + 1e-15);
                    prev = c;
                }
            }
        }
    }

    #[test]
    fn psi_special_cases() {
        let m0 = MarketSpec::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(psi(0.7, 0.04, &m0).unwrap(), black_scholes_call(1.0, 1.0, 0.04).unwrap());
        assert_eq!(psi(-3.0, 0.04, &m0).unwrap(), psi(0.7, 0.04, &m0).unwrap());
        let m1 = MarketSpec::new(1.0, 0.9, 1.0).unwrap();
        let expect = ((0.2f64 - 0.02).exp() - 0.9).max(0.0);
        assert!((psi(0.2, 0.04, &m1).unwrap() - expect).abs() < 1e-15);
        let m = MarketSpec::new(1.0, 1.0, -0.8).unwrap();
        let p = psi(0.0, 0.04, &m).unwrap();
        let q = black_scholes_call((-0.0128f64).exp(), 1.0, 0.0144).unwrap();
        assert!((p - q).abs() < 1e-15);
        let m = MarketSpec::new(2.0, 1.5, 0.6).unwrap();
        assert!((psi(0.3, 0.0, &m).unwrap() - (2.0 * (0.18f64).exp() - 1.5)).abs() < 1e-14);
        let half = psi_with(0.0, 0.04, &m0, PsiVariant::PaperSec6).unwrap();
        assert_eq!(half, black_scholes_call(1.0, 1.0, 0.02).unwrap());
    }

    #[test]
    fn market_validation() {
        assert!(MarketSpec::new(0.0, 1.0, 0.0).is_err());
        assert!(MarketSpec::new(1.0, -1.0, 0.0).is_err());
        assert!(MarketSpec::new(1.0, 1.0, 1.2).is_err());
        assert!((MarketSpec::new(1.0, 1.0, -0.8).unwrap().rho_bar() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn constant_vol_price_is_black_scholes() {
        let mkt = MarketSpec::new(1.0, 1.0, 0.0).unwrap();
        let model = SimpleModel::new(Hurst::new(0.3).unwrap(), FunctionFamily::constant(0.2));
        let est = price_call_mc(&mkt, &model, HaarLevel::new(5).unwrap(), 500, 3).unwrap();
        assert!((est.value - black_scholes_call(1.0, 1.0, 0.04).unwrap()).abs() < 1e-14);
        assert_eq!(est.stderr, 0.0);
        assert!(price_call_mc(&mkt, &model, HaarLevel::new(5).unwrap(), 1, 3).is_err());
    }

    #[test]
    fn psi_variant_names() {
        assert_eq!("paper-sec6".parse::<PsiVariant>().unwrap(), PsiVariant::PaperSec6);
        assert_eq!(PsiVariant::default().to_string(), "derived");
        assert!("half".parse::<PsiVariant>().is_err());
    }
}
