//! Fast exact-identity checks run by `roughvol selftest`.

use crate::config::{parse_config, RunConfig};
use crate::error::Result;
use crate::estimators::{EstimatorContext, QuadratureConfig};
use crate::functions::{FunctionFamily, SmoothFunction};
use crate::harness::{fit_rate, option_rate_study, strong_error_study, OptionStudyConfig, StrongStudyConfig};
use crate::kernel::{mollified_kernel_haar, renorm_constant, renorm_nonconstant, volterra_kernel, HaarLevel, Hurst, RenormScheme};
use crate::ldp::{controlled_path, rate_function, skew_formula, LdpProblem, OptConfig};
use crate::noise::{build_joint_covariance, fbm_eval, wdot_eval, HaarWhiteNoise};
use crate::pricing::{black_scholes_call, psi, MarketSpec, PsiVariant};
use crate::volterra::{Stepper, VolterraCoeffs, VolterraSolver};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn run(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn h(v: f64) -> Hurst {
    Hurst::new(v).expect("valid Hurst index")
}

fn lvl(n: u32) -> HaarLevel {
    HaarLevel::new(n).expect("valid level")
}

/// Run every check in a fixed order.
pub fn run_all() -> Vec<Check> {
    vec![
        run("kernel at H=1/2 is the indicator", || {
            let v = volterra_kernel(h(0.5), 0.0, 1.0);
            Ok((v == 1.0, format!("K(0,1) = {v}")))
        }),
        run("kernel vanishes for t <= s", || {
            let v = volterra_kernel(h(0.3), 1.0, 0.5);
            Ok((v == 0.0, format!("K(1,0.5) = {v}")))
        }),
        run("mollified kernel vanishes across cells", || {
            let v = (1..6).map(|n| mollified_kernel_haar(h(0.3), lvl(n), 0.1, 0.9).abs()).fold(0.0, f64::max);
            Ok((v == 0.0, format!("max |K^eps(0.1,0.9)| = {v}")))
        }),
        run("non-constant renormalization vanishes on grid points", || {
            let v = (0..8).map(|k| renorm_nonconstant(h(0.3), lvl(3), k as f64 / 8.0).abs()).fold(0.0, f64::max);
            Ok((v == 0.0, format!("max = {v}")))
        }),
        run("constant renormalization at H=1/2 is 1/2", || {
            let ok = (0..12).all(|n| renorm_constant(h(0.5), lvl(n)) == 0.5);
            Ok((ok, "N = 0..11".into()))
        }),
        run("level-0 noise is deterministic", || {
            let a = HaarWhiteNoise::generate(lvl(0), 5, 0);
            let b = HaarWhiteNoise::generate(lvl(0), 5, 0);
            Ok((a == b && a.coeffs().len() == 1, format!("Z0 = {}", a.coeffs()[0])))
        }),
        run("coarsening preserves W(1)", || {
            let fine = HaarWhiteNoise::generate(lvl(6), 3, 1);
            let coarse = fine.coarsen()?;
            let (a, b) = (fine.brownian(1.0), coarse.brownian(1.0));
            Ok((close(a, b, 1e-13), format!("{a} vs {b}")))
        }),
        run("all-zero noise coarsens to zero", || {
            let z = HaarWhiteNoise::from_coeffs(lvl(4), vec![0.0; 16])?.coarsen()?;
            Ok((z.coeffs().iter().all(|&c| c == 0.0), String::new()))
        }),
        run("fBM approximation starts at zero", || {
            let s = HaarWhiteNoise::generate(lvl(5), 1, 0);
            let v = fbm_eval(&s, h(0.3), 0.0)?;
            Ok((v == 0.0, format!("W_hat(0) = {v}")))
        }),
        run("Haar noise is piecewise constant", || {
            let s = HaarWhiteNoise::generate(lvl(3), 1, 0);
            let (a, b) = (wdot_eval(&s, 0.26)?, wdot_eval(&s, 0.37)?);
            Ok((a == b, format!("{a} vs {b}")))
        }),
        run("joint covariance at H=1/2 is two Brownian blocks", || {
            let grid = [0.25, 0.5, 1.0];
            let jg = build_joint_covariance(h(0.5), &grid)?;
            let mut dev: f64 = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    dev = dev.max((jg.covariance[(i, j)] - grid[i % 3].min(grid[j % 3])).abs());
                }
            }
            Ok((dev <= 1e-10, format!("max deviation {dev:e}")))
        }),
        run("constant f: I~ equals the scaled coefficient sum", || {
            let s = HaarWhiteNoise::generate(lvl(5), 2, 0);
            let ctx = EstimatorContext::new(h(0.3), lvl(5), QuadratureConfig::default())?;
            let i = ctx.itilde(&s, &FunctionFamily::constant(0.7), RenormScheme::NonConstant, 1.0)?;
            let want = 0.7 * s.brownian(1.0);
            Ok((close(i, want, 1e-12), format!("{i} vs {want}")))
        }),
        run("constant f: V equals sigma^2 t", || {
            let s = HaarWhiteNoise::generate(lvl(5), 2, 0);
            let ctx = EstimatorContext::new(h(0.3), lvl(5), QuadratureConfig::default())?;
            let v = ctx.vhat(&s, &FunctionFamily::constant(0.7), 0.5)?;
            Ok((close(v, 0.245, 1e-14), format!("V = {v}")))
        }),
        run("Taylor estimator with M=0 and constant f equals I~", || {
            let s = HaarWhiteNoise::generate(lvl(4), 2, 0);
            let ctx = EstimatorContext::new(h(0.3), lvl(4), QuadratureConfig::default())?;
            let f = FunctionFamily::constant(1.3);
            let j = ctx.jtilde(&s, &f, RenormScheme::NonConstant, 0, 1.0)?;
            let i = ctx.itilde(&s, &f, RenormScheme::NonConstant, 1.0)?;
            Ok((close(i, j, 1e-12), format!("{j} vs {i}")))
        }),
        run("Ito sum at N=0 is f(0) Z0", || {
            let s = HaarWhiteNoise::generate(lvl(0), 9, 0);
            let ctx = EstimatorContext::new(h(0.3), lvl(0), QuadratureConfig::default())?;
            let v = ctx.ito_reference_sum(&s, &FunctionFamily::Exp, 1.0)?;
            Ok((close(v, s.coeffs()[0], 1e-15), format!("{v}")))
        }),
        run("Black-Scholes with K=0 returns S0", || {
            let v = black_scholes_call(1.7, 0.0, 0.3)?;
            Ok((v == 1.7, format!("{v}")))
        }),
        run("Black-Scholes ATM with zero variance is 0", || {
            let v = black_scholes_call(1.0, 1.0, 0.0)?;
            Ok((v == 0.0, format!("{v}")))
        }),
        run("Psi with rho=0 ignores the noise integral", || {
            let mkt = MarketSpec::new(1.0, 1.0, 0.0)?;
            let (a, b) = (psi(0.4, 0.09, &mkt)?, psi(-2.0, 0.09, &mkt)?);
            let bs = black_scholes_call(1.0, 1.0, 0.09)?;
            Ok((a == b && close(a, bs, 1e-15), format!("{a} vs {bs}")))
        }),
        run("Psi with rho=1 is the intrinsic value", || {
            let mkt = MarketSpec::new(1.0, 0.9, 1.0)?;
            let v = psi(0.2, 0.04, &mkt)?;
            let want = ((0.2f64 - 0.02).exp() - 0.9).max(0.0);
            Ok((close(v, want, 1e-14), format!("{v} vs {want}")))
        }),
        run("exp family has equal derivatives", || {
            let f = FunctionFamily::Exp;
            let ok = (0..4).all(|m| f.eval(m, 0.3, 0.0) == 0.3f64.exp());
            Ok((ok, String::new()))
        }),
        run("Volterra with u=1, v=0 reproduces the fBM approximation", || {
            let s = HaarWhiteNoise::generate(lvl(5), 4, 0);
            let coeffs = VolterraCoeffs {
                z: 0.2,
                u: FunctionFamily::constant(1.0),
                v: FunctionFamily::constant(0.0),
                f: FunctionFamily::Exp,
            };
            let solver = VolterraSolver::new(h(0.3), lvl(5), RenormScheme::NonConstant, Stepper::default())?;
            let path = solver.solve_grid(&s, &coeffs)?;
            let mut dev: f64 = 0.0;
            for (k, z) in path.grid.iter().enumerate() {
                dev = dev.max((z - 0.2 - fbm_eval(&s, h(0.3), k as f64 / 32.0)?).abs());
            }
            Ok((dev <= 1e-12, format!("max deviation {dev:e}")))
        }),
        run("zero control gives the zero path", || {
            let p = LdpProblem::simple(FunctionFamily::Exp, -0.5, h(0.3), 16)?;
            let c = controlled_path(&p, &[0.0; 16])?;
            Ok((c.values.iter().all(|&v| v == 0.0), String::new()))
        }),
        run("u=1, z=0 Picard converges in one iteration", || {
            let p = LdpProblem::non_simple(FunctionFamily::Exp, FunctionFamily::constant(1.0), 0.0, -0.5, h(0.3), 16)?;
            let c = controlled_path(&p, &[0.3; 16])?;
            Ok((c.iterations == 1, format!("{} iterations", c.iterations)))
        }),
        run("rate function vanishes at y=0", || {
            let p = LdpProblem::simple(FunctionFamily::Exp, -0.5, h(0.3), 16)?;
            let r = rate_function(0.0, &p, &OptConfig::default())?;
            Ok((r.value.abs() <= 1e-10, format!("I(0) = {:e}", r.value)))
        }),
        run("rate function is below its value at h=0", || {
            let p = LdpProblem::simple(FunctionFamily::bergomi(0.2, 1.0), -0.7, h(0.3), 16)?;
            let y = 0.1;
            let r = rate_function(y, &p, &OptConfig::default())?;
            let (_, i2) = p.functionals(&[0.0; 16]);
            let bound = y * y / (2.0 * i2);
            Ok((r.value <= bound + 1e-14, format!("{} <= {bound}", r.value)))
        }),
        run("skew vanishes at rho=0", || {
            let v = skew_formula(h(0.3), 0.0, 1.5, 0.04, 0.1)?;
            Ok((v == 0.0, format!("{v}")))
        }),
        run("strong study with constant f has zero error", || {
            let cfg = StrongStudyConfig {
                h_list: vec![0.3],
                n_list: vec![2, 3, 4],
                n_ref: 5,
                f: FunctionFamily::constant(0.4),
                scheme: RenormScheme::NonConstant,
                m_samples: 8,
                quad: QuadratureConfig::PointsPerCell(3),
                seed: 1,
            };
            let r = strong_error_study(&cfg)?;
            // coarsening rescales sums by 1/sqrt(2), so equality holds up to roundoff
            let worst = r[0].rows.iter().map(|row| row.error).fold(0.0, f64::max);
            Ok((worst <= 1e-12, format!("max error {worst:e}")))
        }),
        run("option study with rho=0 and constant f has zero error", || {
            let cfg = OptionStudyConfig {
                mkt: MarketSpec::new(1.0, 1.0, 0.0)?,
                h_list: vec![0.3],
                n_list: vec![2, 3, 4],
                n_ref: 5,
                f: FunctionFamily::constant(0.2),
                scheme: RenormScheme::NonConstant,
                psi: PsiVariant::default(),
                m_samples: 8,
                quad: QuadratureConfig::PointsPerCell(3),
                seed: 1,
            };
            let r = option_rate_study(&cfg)?;
            let worst = r[0].rows.iter().map(|row| row.error).fold(0.0, f64::max);
            Ok((worst == 0.0, format!("max error {worst:e}")))
        }),
        run("rate fit recovers an exact power law", || {
            let pts: Vec<(f64, f64)> = (2..8).map(|n| (-(n as f64) * std::f64::consts::LN_2, -0.3 * n as f64 * std::f64::consts::LN_2)).collect();
            let s = fit_rate(&pts)?.slope;
            Ok((close(s, 0.3, 1e-12), format!("slope {s}")))
        }),
        run("rate fit rejects identical points", || {
            Ok((fit_rate(&[(1.0, 2.0), (1.0, 2.0), (1.0, 2.0)]).is_err(), String::new()))
        }),
        run("empty config file equals flags only", || {
            let flags = || vec![("H", "0.2".to_string())];
            let a = RunConfig::layered("price", Some(parse_config("")?), &[], flags());
            Ok((a == RunConfig::layered("price", None, &[], flags()), String::new()))
        }),
        run("duplicate config key: last wins with a warning", || {
            let c = parse_config("H = 0.1\nH = 0.2\n")?;
            Ok((c.values["H"] == "0.2" && c.warnings.len() == 1, String::new()))
        }),
        run("missing required key is named", || {
            let mut c = RunConfig::layered("price", None, &[], vec![]);
            let msg = c.require::<f64>("rho").err().map(|e| e.to_string()).unwrap_or_default();
            Ok((msg.contains("rho"), msg))
        }),
    ]
}
