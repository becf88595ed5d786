//! Convergence-rate studies: strong error, weak second moment, option price.
//!
//! Every study draws one coefficient array per sample at the finest level and
//! obtains all coarser levels from it by dyadic coarsening, so all levels see
//! the same Brownian path.

use std::fmt;
use std::io::Write;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorContext, QuadratureConfig};
use crate::functions::FunctionFamily;
use crate::kernel::{HaarLevel, Hurst, RenormScheme};
use crate::mc::{map_chunks, Moments, CHUNK_SIZE};
use crate::noise::HaarWhiteNoise;
use crate::pricing::{psi_with, MarketSpec, PsiVariant};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Strong,
    Weak,
    Option,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Strong => "strong",
            StudyKind::Weak => "weak",
            StudyKind::Option => "option",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error estimate at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: u32,
    pub eps: f64,
    pub error: f64,
    pub stderr: f64,
}

/// Least-squares fit of `log error = intercept + slope log eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci95: (f64, f64),
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudyResult {
    pub study: StudyKind,
    pub hurst: f64,
    /// Sorted by increasing `N`.
    pub rows: Vec<RateRow>,
    /// `None` when fewer than three rows have a positive error.
    pub fit: Option<RateFit>,
    /// Levels left out of the regression because their error is zero.
    pub excluded_zero: Vec<u32>,
    /// Levels whose error exceeds the previous level's by more than two standard errors.
    pub monotone_violations: Vec<u32>,
    pub m_samples: usize,
    pub seed: u64,
    /// Order-independent digest of every finest-level coefficient array used.
    pub reference_digest: u64,
}

/// OLS slope and intercept with a t-distribution confidence interval on the slope.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("rate fit needs at least 3 points, got {n}")));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Domain("rate fit points must be finite".into()));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::Degenerate("rate fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (ssr / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::Numeric(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    Ok(RateFit { slope, intercept, ci95: (slope - t * se, slope + t * se), n_points: n })
}

/// Rate `r` fitted under the finite-reference model
/// `error^p = a (eps^{p r} - eps_ref^{p r})`, with `p = 2` for strong errors
/// (squared increments add up between levels) and `p = 1` for weak ones.
///
/// A plain log-log slope against a reference level close to the study
/// levels overstates the rate; this fit removes that bias.
pub fn reference_corrected_rate(rows: &[RateRow], eps_ref: f64, p: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.error > 0.0 && r.eps > eps_ref).map(|r| (r.eps, r.error)).collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate(format!("corrected rate needs at least 2 usable rows, got {}", pts.len())));
    }
    let sse = |r: f64| {
        let resid: Vec<f64> = pts
            .iter()
            .map(|&(e, err)| p * err.ln() - (e.powf(p * r) - eps_ref.powf(p * r)).ln())
            .collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        resid.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    };
    let (lo, hi, steps) = (1e-3, 2.0, 400);
    let grid_best = (0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .min_by(|a, b| sse(*a).total_cmp(&sse(*b)))
        .expect("non-empty grid");
    let width = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((grid_best - width).max(lo), (grid_best + width).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if sse(c) < sse(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(0.5 * (a + b))
}

fn finish(
    study: StudyKind,
    hurst: f64,
    rows: Vec<RateRow>,
    m_samples: usize,
    seed: u64,
    reference_digest: u64,
) -> Result<RateStudyResult> {
    let excluded_zero: Vec<u32> = rows.iter().filter(|r| !(r.error > 0.0)).map(|r| r.n).collect();
    if !excluded_zero.is_empty() {
        log::warn!("{study} study, H={hurst}: levels {excluded_zero:?} have zero error and are left out of the fit");
    }
    let points: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.error > 0.0).map(|r| (r.eps.ln(), r.error.ln())).collect();
    let fit = if points.len() >= 3 { Some(fit_rate(&points)?) } else { None };
    let monotone_violations: Vec<u32> = rows
        .windows(2)
        .filter(|w| w[1].error > w[0].error + 2.0 * w[0].stderr.max(w[1].stderr))
        .map(|w| w[1].n)
        .collect();
    if !monotone_violations.is_empty() {
        log::warn!("{study} study, H={hurst}: error increases at levels {monotone_violations:?}");
    }
    Ok(RateStudyResult { study, hurst, rows, fit, excluded_zero, monotone_violations, m_samples, seed, reference_digest })
}

fn sorted_levels(n_list: &[u32]) -> Result<Vec<u32>> {
    if n_list.is_empty() {
        return Err(Error::Config("level list is empty".into()));
    }
    let mut v = n_list.to_vec();
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

fn check_reference(levels: &[u32], n_ref: u32) -> Result<()> {
    let max = *levels.last().expect("non-empty");
    if n_ref <= max {
        return Err(Error::Config(format!("reference level {n_ref} must exceed every study level (max {max})")));
    }
    Ok(())
}

fn mix_digest(id: u64, d: u64) -> u64 {
    (d ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Per-sample statistics over `count` samples, plus an audit digest of the finest noise.
///
/// `sample(id, out)` fills `out` and returns the digest of the noise it drew.
fn audited_moments<F>(count: usize, dims: usize, sample: F) -> Result<(Vec<Moments>, u64)>
where
    F: Fn(u64, &mut [f64]) -> Result<u64> + Sync,
{
    if count < 2 {
        return Err(Error::Config(format!("a study needs at least 2 samples, got {count}")));
    }
    let parts = map_chunks(count, CHUNK_SIZE, |range| {
        let mut acc = vec![Moments::default(); dims];
        let mut buf = vec![0.0; dims];
        let mut digest = 0u64;
        for id in range {
            let d = sample(id as u64, &mut buf)?;
            digest = digest.wrapping_add(mix_digest(id as u64, d));
            for (m, &x) in acc.iter_mut().zip(&buf) {
                m.push(x);
            }
        }
        Ok((acc, digest))
    })?;
    let mut total = vec![Moments::default(); dims];
    let mut digest = 0u64;
    for (acc, d) in &parts {
        for (t, p) in total.iter_mut().zip(acc) {
            t.merge(p);
        }
        digest = digest.wrapping_add(*d);
    }
    Ok((total, digest))
}

/// Audit digest of `count` samples drawn at `level`, recomputed independently.
pub fn reference_digest(level: HaarLevel, count: usize, seed: u64) -> u64 {
    (0..count as u64).fold(0u64, |acc, id| {
        acc.wrapping_add(mix_digest(id, HaarWhiteNoise::generate(level, seed, id).digest()))
    })
}

/// Build estimator contexts for `levels` (ascending).
fn contexts(h: Hurst, levels: &[u32], quad: QuadratureConfig) -> Result<Vec<EstimatorContext>> {
    levels.iter().map(|&n| EstimatorContext::new(h, HaarLevel::new(n)?, quad)).collect()
}

/// Walk from `fine` down through `levels` (ascending), calling `visit(index, noise)` at each.
fn descend<F>(fine: &HaarWhiteNoise, levels: &[u32], mut visit: F) -> Result<()>
where
    F: FnMut(usize, &HaarWhiteNoise) -> Result<()>,
{
    let mut cur = fine.clone();
    for (idx, &n) in levels.iter().enumerate().rev() {
        while cur.level().n() > n {
            cur = cur.coarsen()?;
        }
        visit(idx, &cur)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongStudyConfig {
    pub h_list: Vec<f64>,
    pub n_list: Vec<u32>,
    pub n_ref: u32,
    pub f: FunctionFamily,
    pub scheme: RenormScheme,
    pub m_samples: usize,
    pub quad: QuadratureConfig,
    pub seed: u64,
}

/// Root-mean-square distance of `I~` at each level to `I~` at the reference level.
pub fn strong_error_study(cfg: &StrongStudyConfig) -> Result<Vec<RateStudyResult>> {
    let levels = sorted_levels(&cfg.n_list)?;
    check_reference(&levels, cfg.n_ref)?;
    let ref_level = HaarLevel::new(cfg.n_ref)?;
    cfg.h_list
        .iter()
        .map(|&hv| {
            let h = Hurst::new(hv)?;
            let ctxs = contexts(h, &levels, cfg.quad)?;
            let ref_ctx = EstimatorContext::new(h, ref_level, cfg.quad)?;
            let (moments, digest) = audited_moments(cfg.m_samples, levels.len(), |id, out| {
                let fine = HaarWhiteNoise::generate(ref_level, cfg.seed, id);
                let reference = ref_ctx.itilde(&fine, &cfg.f, cfg.scheme, 1.0)?;
                descend(&fine, &levels, |idx, noise| {
                    let d = ctxs[idx].itilde(noise, &cfg.f, cfg.scheme, 1.0)? - reference;
                    out[idx] = d * d;
                    Ok(())
                })?;
                Ok(fine.digest())
            })?;
            let rows = levels
                .iter()
                .zip(&moments)
                .map(|(&n, m)| {
                    let mse = m.mean();
                    let error = mse.sqrt();
                    let stderr = if mse > 0.0 { m.stderr() / (2.0 * error) } else { 0.0 };
                    RateRow { n, eps: HaarLevel::new(n).expect("validated").eps(), error, stderr }
                })
                .collect();
            finish(StudyKind::Strong, hv, rows, cfg.m_samples, cfg.seed, digest)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakStudyConfig {
    pub hurst: f64,
    pub n_list: Vec<u32>,
    pub f: FunctionFamily,
    pub scheme: RenormScheme,
    pub m_samples: usize,
    pub quad: QuadratureConfig,
    pub seed: u64,
}

/// `int_0^1 exp(2 t^{2H}) dt`, the second moment of the limiting integral for `f = exp`.
pub fn weak_reference(h: Hurst) -> Result<f64> {
    let two_h = 2.0 * h.value();
    Ok(quad::integrate(|t: f64| (2.0 * t.powf(two_h)).exp(), 0.0, 1.0, 1e-13)?.value)
}

/// `|E[I~^2] - int_0^1 exp(2 t^{2H}) dt|` at each level; levels share samples via coarsening.
pub fn weak_second_moment_study(cfg: &WeakStudyConfig) -> Result<RateStudyResult> {
    if cfg.f != FunctionFamily::Exp {
        return Err(Error::Config(format!(
            "the weak second-moment study needs f = exp (the reference is exp-specific), got `{}`",
            cfg.f
        )));
    }
    let levels = sorted_levels(&cfg.n_list)?;
    let h = Hurst::new(cfg.hurst)?;
    let q = weak_reference(h)?;
    let top = HaarLevel::new(*levels.last().expect("non-empty"))?;
    let ctxs = contexts(h, &levels, cfg.quad)?;
    let (moments, digest) = audited_moments(cfg.m_samples, levels.len(), |id, out| {
        let fine = HaarWhiteNoise::generate(top, cfg.seed, id);
        descend(&fine, &levels, |idx, noise| {
            let i = ctxs[idx].itilde(noise, &cfg.f, cfg.scheme, 1.0)?;
            out[idx] = i * i;
            Ok(())
        })?;
        Ok(fine.digest())
    })?;
    let rows = levels
        .iter()
        .zip(&moments)
        .map(|(&n, m)| RateRow {
            n,
            eps: HaarLevel::new(n).expect("validated").eps(),
            error: (m.mean() - q).abs(),
            stderr: m.stderr(),
        })
        .collect();
    finish(StudyKind::Weak, cfg.hurst, rows, cfg.m_samples, cfg.seed, digest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionStudyConfig {
    pub mkt: MarketSpec,
    pub h_list: Vec<f64>,
    pub n_list: Vec<u32>,
    pub n_ref: u32,
    pub f: FunctionFamily,
    pub scheme: RenormScheme,
    pub psi: PsiVariant,
    pub m_samples: usize,
    pub quad: QuadratureConfig,
    pub seed: u64,
}

impl OptionStudyConfig {
    /// Rough Bergomi volatility `f = sigma0 exp(eta x / 2)`.
    pub fn bergomi(sigma0: f64, eta: f64) -> FunctionFamily {
        FunctionFamily::bergomi(sigma0, eta)
    }
}

/// `|C^eps - C^ref|` from paired conditional prices on shared samples.
pub fn option_rate_study(cfg: &OptionStudyConfig) -> Result<Vec<RateStudyResult>> {
    let levels = sorted_levels(&cfg.n_list)?;
    check_reference(&levels, cfg.n_ref)?;
    let ref_level = HaarLevel::new(cfg.n_ref)?;
    cfg.h_list
        .iter()
        .map(|&hv| {
            let h = Hurst::new(hv)?;
            let ctxs = contexts(h, &levels, cfg.quad)?;
            let ref_ctx = EstimatorContext::new(h, ref_level, cfg.quad)?;
            let price = |ctx: &EstimatorContext, noise: &HaarWhiteNoise| -> Result<f64> {
                let e = ctx.estimate(noise, &cfg.f, cfg.scheme, 1.0)?;
                psi_with(e.i_tilde, e.v_hat, &cfg.mkt, cfg.psi)
            };
            let (moments, digest) = audited_moments(cfg.m_samples, levels.len(), |id, out| {
                let fine = HaarWhiteNoise::generate(ref_level, cfg.seed, id);
                let reference = price(&ref_ctx, &fine)?;
                descend(&fine, &levels, |idx, noise| {
                    out[idx] = price(&ctxs[idx], noise)? - reference;
                    Ok(())
                })?;
                Ok(fine.digest())
            })?;
            let rows = levels
                .iter()
                .zip(&moments)
                .map(|(&n, m)| RateRow {
                    n,
                    eps: HaarLevel::new(n).expect("validated").eps(),
                    error: m.mean().abs(),
                    stderr: m.stderr(),
                })
                .collect();
            finish(StudyKind::Option, hv, rows, cfg.m_samples, cfg.seed, digest)
        })
        .collect()
}

pub const ROWS_HEADER: &str = "study,H,N,eps,error,stderr";
pub const SUMMARY_HEADER: &str = "study,H,fitted_rate,ci_lo,ci_hi,n_points,M,seed";

pub fn write_rows_csv<W: Write>(mut out: W, results: &[RateStudyResult]) -> Result<()> {
    writeln!(out, "{ROWS_HEADER}")?;
    for r in results {
        for row in &r.rows {
            writeln!(out, "{},{},{},{},{},{}", r.study, r.hurst, row.n, row.eps, row.error, row.stderr)?;
        }
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(mut out: W, results: &[RateStudyResult]) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in results {
        match &r.fit {
            Some(fit) => writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.study, r.hurst, fit.slope, fit.ci95.0, fit.ci95.1, fit.n_points, r.m_samples, r.seed
            )?,
            None => writeln!(out, "{},{},NaN,NaN,NaN,0,{},{}", r.study, r.hurst, r.m_samples, r.seed)?,
        }
    }
    Ok(())
}

/// File name of the log-log plot data for a study.
pub fn plot_file_name(kind: StudyKind) -> &'static str {
    match kind {
        StudyKind::Strong => "fig1_2_strong_error.csv",
        StudyKind::Weak => "weak_second_moment_error.csv",
        StudyKind::Option => "fig3_option_error.csv",
    }
}

/// Base-2 log-log series with normal 95% bands and the fitted line, one file per study kind.
pub fn write_plot_data(dir: &Path, results: &[RateStudyResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for kind in [StudyKind::Strong, StudyKind::Weak, StudyKind::Option] {
        let of_kind: Vec<&RateStudyResult> = results.iter().filter(|r| r.study == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join(plot_file_name(kind)))?);
        writeln!(out, "H,log2_eps,log2_error,log2_ci_lo,log2_ci_hi,log2_fit")?;
        for r in of_kind {
            for row in &r.rows {
                let lo = row.error - 1.96 * row.stderr;
                let hi = row.error + 1.96 * row.stderr;
                let log2 = |v: f64| if v > 0.0 { v.log2() } else { f64::NAN };
                let fit = r
                    .fit
                    .map_or(f64::NAN, |f| (f.intercept + f.slope * row.eps.ln()) / std::f64::consts::LN_2);
                writeln!(out, "{},{},{},{},{},{}", r.hurst, row.eps.log2(), log2(row.error), log2(lo), log2(hi), fit)?;
            }
        }
        out.flush()?;
    }
    Ok(())
}
