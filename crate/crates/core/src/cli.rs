//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage or configuration problems, 2 for
//! numerical failures (including a failing `selftest`).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::error::{Error, Result};
use crate::functions::FunctionFamily;
use crate::harness::{
    option_rate_study, strong_error_study, weak_second_moment_study, write_plot_data, write_rows_csv,
    write_summary_csv, OptionStudyConfig, RateStudyResult, StrongStudyConfig, WeakStudyConfig,
};
use crate::kernel::{HaarLevel, Hurst, RenormScheme};
use crate::ldp::{rate_curve, write_rate_csv, BfgsConfig, LdpProblem};
use crate::mc::with_threads;
use crate::pricing::{price_call_mc, write_price_row, MarketSpec, PsiVariant, SimpleModel, PRICE_HEADER};
use crate::selftest;
use crate::volterra::{simulate_paths, write_volterra_paths, Stepper, VolterraCoeffs, VolterraSolver};

#[derive(Debug, Parser)]
#[command(name = "roughvol", version, about = "Haar-noise Monte Carlo for rough volatility models")]
struct Cli {
    /// Flat `key = value` file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Output CSV (stdout when absent).
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo call price under a simple rough volatility model.
    Price(PriceArgs),
    /// Strong error of the renormalized integral against a fine reference.
    StrongRate(StudyArgs),
    /// Weak error of the second moment of the renormalized integral (f = exp).
    WeakRate(StudyArgs),
    /// Weak error of the call price against a fine reference.
    OptionRate(OptionArgs),
    /// Large-deviations rate function on a grid of log-moneyness values.
    Ldp(LdpArgs),
    /// Sample paths of a renormalized Volterra equation.
    VolterraSim(VolterraArgs),
    /// Run the built-in exact-identity checks.
    Selftest,
}

#[derive(Debug, Args, Default)]
struct Common {
    /// Hurst index (a list such as `0.1,0.3` for rate studies).
    #[arg(long = "H")]
    h: Option<String>,
    /// Haar level, or levels `4..7` / `4,5,6` for rate studies.
    #[arg(long = "N")]
    n: Option<String>,
    /// Monte Carlo samples.
    #[arg(long = "M")]
    m: Option<String>,
    /// Trapezoid step, decimal or `2^-k`.
    #[arg(long)]
    delta: Option<String>,
    /// Trapezoid points per Haar cell (instead of `--delta`).
    #[arg(long)]
    d: Option<String>,
    /// Volatility function, e.g. `exp` or `bergomi:sigma0=0.2,eta=2`.
    #[arg(long)]
    f: Option<String>,
    /// Renormalization: `nonconstant` or `constant`.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct PriceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long = "S0")]
    s0: Option<String>,
    /// `derived` or `paper-sec6`.
    #[arg(long = "psi-variant")]
    psi_variant: Option<String>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct StudyArgs {
    #[command(flatten)]
    common: Common,
    /// Reference level.
    #[arg(long = "Nref")]
    n_ref: Option<String>,
    /// Summary CSV (defaults to `<out>.summary.csv`, or stdout after the rows).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Directory for log-log plot data.
    #[arg(long = "emit-plot-data", value_name = "DIR")]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct OptionArgs {
    #[command(flatten)]
    study: StudyArgs,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long = "S0")]
    s0: Option<String>,
    /// Rough Bergomi level (used when `--f` is absent).
    #[arg(long)]
    sigma0: Option<String>,
    /// Rough Bergomi vol-of-vol (used when `--f` is absent).
    #[arg(long)]
    eta: Option<String>,
    #[arg(long = "psi-variant")]
    psi_variant: Option<String>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct LdpArgs {
    #[arg(long = "H")]
    h: Option<String>,
    #[arg(long)]
    f: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<String>,
    /// Log-moneyness values: `a,b,c` or `lo:hi:count`.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// Control cells.
    #[arg(long = "n-grid")]
    n_grid: Option<String>,
    /// Diffusion coefficient of a non-simple model.
    #[arg(long)]
    u: Option<String>,
    /// Starting point of a non-simple model.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct VolterraArgs {
    #[arg(long = "H")]
    h: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    /// `second-order` or `left-point`.
    #[arg(long)]
    stepper: Option<String>,
    /// Number of sample paths.
    #[arg(long)]
    paths: Option<String>,
    /// Output times per path, evenly spaced on [0, 1].
    #[arg(long)]
    times: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

type Flags = Vec<(&'static str, String)>;

fn push(flags: &mut Flags, key: &'static str, v: &Option<String>) {
    if let Some(v) = v {
        flags.push((key, v.clone()));
    }
}

fn push_path(flags: &mut Flags, key: &'static str, v: &Option<PathBuf>) {
    if let Some(v) = v {
        flags.push((key, v.display().to_string()));
    }
}

impl Common {
    fn flags(&self, out: &mut Flags) {
        for (k, v) in [
            ("H", &self.h),
            ("N", &self.n),
            ("M", &self.m),
            ("delta", &self.delta),
            ("d", &self.d),
            ("f", &self.f),
            ("scheme", &self.scheme),
            ("seed", &self.seed),
        ] {
            push(out, k, v);
        }
    }
}

impl StudyArgs {
    fn flags(&self, out: &mut Flags) {
        self.common.flags(out);
        push(out, "Nref", &self.n_ref);
        push_path(out, "summary", &self.summary);
        push_path(out, "emit-plot-data", &self.emit_plot_data);
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Price(_) => "price",
            Command::StrongRate(_) => "strong-rate",
            Command::WeakRate(_) => "weak-rate",
            Command::OptionRate(_) => "option-rate",
            Command::Ldp(_) => "ldp",
            Command::VolterraSim(_) => "volterra-sim",
            Command::Selftest => "selftest",
        }
    }

    fn flags(&self) -> Flags {
        let mut out = Flags::new();
        match self {
            Command::Price(a) => {
                a.common.flags(&mut out);
                push(&mut out, "rho", &a.rho);
                push(&mut out, "K", &a.k);
                push(&mut out, "S0", &a.s0);
                push(&mut out, "psi-variant", &a.psi_variant);
            }
            Command::StrongRate(a) | Command::WeakRate(a) => a.flags(&mut out),
            Command::OptionRate(a) => {
                a.study.flags(&mut out);
                push(&mut out, "rho", &a.rho);
                push(&mut out, "K", &a.k);
                push(&mut out, "S0", &a.s0);
                push(&mut out, "sigma0", &a.sigma0);
                push(&mut out, "eta", &a.eta);
                push(&mut out, "psi-variant", &a.psi_variant);
            }
            Command::Ldp(a) => {
                push(&mut out, "H", &a.h);
                push(&mut out, "f", &a.f);
                push(&mut out, "rho", &a.rho);
                push(&mut out, "y", &a.y);
                push(&mut out, "n-grid", &a.n_grid);
                push(&mut out, "u", &a.u);
                push(&mut out, "z", &a.z);
            }
            Command::VolterraSim(a) => {
                push(&mut out, "H", &a.h);
                push(&mut out, "N", &a.n);
                push(&mut out, "u", &a.u);
                push(&mut out, "v", &a.v);
                push(&mut out, "z", &a.z);
                push(&mut out, "scheme", &a.scheme);
                push(&mut out, "stepper", &a.stepper);
                push(&mut out, "paths", &a.paths);
                push(&mut out, "times", &a.times);
                push(&mut out, "seed", &a.seed);
            }
            Command::Selftest => {}
        }
        out
    }
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Anything that goes wrong while turning flags into typed settings is a configuration error.
fn as_config<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io(_) => e,
        other => Error::Config(other.to_string()),
    })
}

fn execute(cli: Cli) -> Result<i32> {
    let file = cli.config.as_deref().map(load_config).transpose()?;
    let env = [
        ("threads", std::env::var("ROUGHVOL_THREADS").ok()),
        ("seed", std::env::var("ROUGHVOL_SEED").ok()),
    ];
    let mut flags = cli.command.flags();
    push(&mut flags, "threads", &cli.threads);
    push_path(&mut flags, "out", &cli.out);
    let mut cfg = RunConfig::layered(cli.command.name(), file, &env, flags);
    let threads: usize = cfg.get_or("threads", 0)?;
    let out: Option<PathBuf> = cfg.optional::<String>("out")?.map(PathBuf::from);
    match cli.command {
        Command::Selftest => Ok(run_selftest()),
        Command::Price(_) => {
            let job = as_config(price_job(&mut cfg))?;
            let header = cfg.provenance();
            let (lvl, est, model) = with_threads(threads, || {
                price_call_mc(&job.mkt, &job.model, job.lvl, job.m, job.seed).map(|e| (job.lvl, e, job.model.clone()))
            })??;
            emit(out.as_deref(), &header, |w| {
                writeln!(w, "{PRICE_HEADER}")?;
                write_price_row(w, lvl, &est, &model)
            })?;
            Ok(0)
        }
        Command::StrongRate(_) => {
            let study = as_config(strong_job(&mut cfg))?;
            let results = with_threads(threads, || strong_error_study(&study))??;
            write_study(&mut cfg, out.as_deref(), &results)
        }
        Command::WeakRate(_) => {
            let study = as_config(weak_job(&mut cfg))?;
            let results = vec![with_threads(threads, || weak_second_moment_study(&study))??];
            write_study(&mut cfg, out.as_deref(), &results)
        }
        Command::OptionRate(_) => {
            let study = as_config(option_job(&mut cfg))?;
            let results = with_threads(threads, || option_rate_study(&study))??;
            write_study(&mut cfg, out.as_deref(), &results)
        }
        Command::Ldp(_) => {
            let (ys, prob) = as_config(ldp_job(&mut cfg))?;
            let header = cfg.provenance();
            let curve = with_threads(threads, || rate_curve(&ys, &prob, BfgsConfig::default()))??;
            emit(out.as_deref(), &header, |w| write_rate_csv(w, &curve))?;
            Ok(0)
        }
        Command::VolterraSim(_) => {
            let job = as_config(volterra_job(&mut cfg))?;
            let header = cfg.provenance();
            let paths = with_threads(threads, || {
                simulate_paths(&job.solver, &job.coeffs, &job.grid, job.paths, job.seed)
            })??;
            emit(out.as_deref(), &header, |w| write_volterra_paths(w, &job.grid, &paths))?;
            Ok(0)
        }
    }
}

fn run_selftest() -> i32 {
    let checks = selftest::run_all();
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut failed = 0;
    for c in &checks {
        let mark = if c.passed { "pass" } else { "FAIL" };
        if !c.passed {
            failed += 1;
        }
        println!("{mark}  {:width$}  {}", c.name, c.detail);
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        0
    } else {
        2
    }
}

/// Write provenance lines and `body` to `path`, or to stdout.
fn emit(path: Option<&Path>, header: &[String], body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Config(format!("cannot create `{}`: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for line in header {
        writeln!(w, "{line}")?;
    }
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_study(cfg: &mut RunConfig, out: Option<&Path>, results: &[RateStudyResult]) -> Result<i32> {
    let summary: Option<PathBuf> = cfg.optional::<String>("summary")?.map(PathBuf::from);
    let plot_dir: Option<PathBuf> = cfg.optional::<String>("emit-plot-data")?.map(PathBuf::from);
    let mut header = cfg.provenance();
    for r in results {
        header.push(format!("# {} H={} reference_digest = {:016x}", r.study, r.hurst, r.reference_digest));
        if !r.monotone_violations.is_empty() {
            header.push(format!("# {} H={} monotonicity violations at N = {:?}", r.study, r.hurst, r.monotone_violations));
        }
        if !r.excluded_zero.is_empty() {
            header.push(format!("# {} H={} zero-error levels left out of the fit: {:?}", r.study, r.hurst, r.excluded_zero));
        }
    }
    let summary_path = summary.or_else(|| out.map(|p| p.with_extension("summary.csv")));
    match (out, &summary_path) {
        (Some(_), Some(sp)) => {
            emit(out, &header, |w| write_rows_csv(w, results))?;
            emit(Some(sp), &header, |w| write_summary_csv(w, results))?;
        }
        (None, Some(sp)) => {
            emit(None, &header, |w| write_rows_csv(w, results))?;
            emit(Some(sp), &header, |w| write_summary_csv(w, results))?;
        }
        (_, None) => emit(None, &header, |w| {
            write_rows_csv(&mut *w, results)?;
            writeln!(w)?;
            write_summary_csv(w, results)
        })?,
    }
    if let Some(dir) = plot_dir {
        write_plot_data(&dir, results)?;
    }
    Ok(0)
}

struct PriceJob {
    mkt: MarketSpec,
    model: SimpleModel,
    lvl: HaarLevel,
    m: usize,
    seed: u64,
}

fn hurst(cfg: &mut RunConfig) -> Result<Hurst> {
    Hurst::new(cfg.get_or("H", 0.3)?)
}

fn market(cfg: &mut RunConfig, defaults: Option<(f64, f64, f64)>) -> Result<MarketSpec> {
    let (rho, k, s0) = match defaults {
        Some((s0, k, rho)) => (cfg.get_or("rho", rho)?, cfg.get_or("K", k)?, cfg.get_or("S0", s0)?),
        None => (cfg.require("rho")?, cfg.require("K")?, cfg.require("S0")?),
    };
    MarketSpec::new(s0, k, rho)
}

fn price_job(cfg: &mut RunConfig) -> Result<PriceJob> {
    let h = hurst(cfg)?;
    let lvl = HaarLevel::new(cfg.get_or("N", 8u32)?)?;
    let m = cfg.get_or("M", 10_000usize)?;
    let quad = cfg.quadrature()?;
    let f: FunctionFamily = cfg.require("f")?;
    let scheme: RenormScheme = cfg.get_or("scheme", RenormScheme::default())?;
    let psi: PsiVariant = cfg.get_or("psi-variant", PsiVariant::default())?;
    let mkt = market(cfg, None)?;
    let seed = cfg.get_or("seed", 0u64)?;
    let model = SimpleModel::new(h, f).with_scheme(scheme).with_quadrature(quad).with_psi(psi);
    Ok(PriceJob { mkt, model, lvl, m, seed })
}

fn strong_job(cfg: &mut RunConfig) -> Result<StrongStudyConfig> {
    Ok(StrongStudyConfig {
        h_list: cfg.list_or("H", "0.3")?,
        n_list: cfg.levels_or("N", "4..7")?,
        n_ref: cfg.get_or("Nref", 9)?,
        f: cfg.get_or("f", FunctionFamily::Exp)?,
        scheme: cfg.get_or("scheme", RenormScheme::default())?,
        m_samples: cfg.get_or("M", 10_000)?,
        quad: cfg.quadrature()?,
        seed: cfg.get_or("seed", 0)?,
    })
}

fn weak_job(cfg: &mut RunConfig) -> Result<WeakStudyConfig> {
    Ok(WeakStudyConfig {
        hurst: cfg.get_or("H", 0.3)?,
        n_list: cfg.levels_or("N", "4..8")?,
        f: cfg.get_or("f", FunctionFamily::Exp)?,
        scheme: cfg.get_or("scheme", RenormScheme::default())?,
        m_samples: cfg.get_or("M", 10_000)?,
        quad: cfg.quadrature()?,
        seed: cfg.get_or("seed", 0)?,
    })
}

fn option_job(cfg: &mut RunConfig) -> Result<OptionStudyConfig> {
    let f = match cfg.raw("f") {
        Some(_) => cfg.require("f")?,
        None => FunctionFamily::bergomi(cfg.get_or("sigma0", 0.2)?, cfg.get_or("eta", 2.0)?),
    };
    Ok(OptionStudyConfig {
        mkt: market(cfg, Some((1.0, 1.0, -0.8)))?,
        h_list: cfg.list_or("H", "0.2")?,
        n_list: cfg.levels_or("N", "3..6")?,
        n_ref: cfg.get_or("Nref", 8)?,
        f,
        scheme: cfg.get_or("scheme", RenormScheme::default())?,
        psi: cfg.get_or("psi-variant", PsiVariant::default())?,
        m_samples: cfg.get_or("M", 10_000)?,
        quad: cfg.quadrature()?,
        seed: cfg.get_or("seed", 0)?,
    })
}

fn ldp_job(cfg: &mut RunConfig) -> Result<(Vec<f64>, LdpProblem)> {
    let h = hurst(cfg)?;
    let f: FunctionFamily = cfg.require("f")?;
    let rho: f64 = cfg.require("rho")?;
    let ys = cfg.list_or("y", "-0.3:0.3:13")?;
    let n_grid = cfg.get_or("n-grid", 64usize)?;
    let prob = match cfg.optional::<FunctionFamily>("u")? {
        Some(u) => LdpProblem::non_simple(f, u, cfg.get_or("z", 0.0)?, rho, h, n_grid)?,
        None => LdpProblem::simple(f, rho, h, n_grid)?,
    };
    Ok((ys, prob))
}

struct VolterraJob {
    solver: VolterraSolver,
    coeffs: VolterraCoeffs,
    grid: Vec<f64>,
    paths: usize,
    seed: u64,
}

fn volterra_job(cfg: &mut RunConfig) -> Result<VolterraJob> {
    let h = hurst(cfg)?;
    let lvl = HaarLevel::new(cfg.get_or("N", 8u32)?)?;
    let coeffs = VolterraCoeffs {
        z: cfg.get_or("z", 0.0)?,
        u: cfg.require("u")?,
        v: cfg.get_or("v", FunctionFamily::constant(0.0))?,
        f: FunctionFamily::Exp,
    };
    let scheme: RenormScheme = cfg.get_or("scheme", RenormScheme::default())?;
    let stepper: Stepper = cfg.get_or("stepper", Stepper::default())?;
    let paths = cfg.get_or("paths", 8usize)?;
    let times = cfg.get_or("times", 17usize)?;
    if times < 2 {
        return Err(Error::Config(format!("`times` must be at least 2, got {times}")));
    }
    let grid = (0..times).map(|i| i as f64 / (times - 1) as f64).collect();
    let seed = cfg.get_or("seed", 0)?;
    Ok(VolterraJob { solver: VolterraSolver::new(h, lvl, scheme, stepper)?, coeffs, grid, paths, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "roughvol", "price", "--H", "0.3", "--N", "8", "--f", "bergomi:sigma0=0.2,eta=2", "--rho", "-0.8", "--K",
            "1", "--S0", "1", "--seed", "42",
        ])
        .unwrap();
        let flags = cli.command.flags();
        assert!(flags.contains(&("rho", "-0.8".to_string())));
        assert!(flags.contains(&("S0", "1".to_string())));
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["roughvol", "price", "--bogus", "1"]), 1);
        assert_eq!(run(["roughvol", "frobnicate"]), 1);
    }

    #[test]
    fn ldp_accepts_negative_lists() {
        let cli = Cli::try_parse_from(["roughvol", "ldp", "--f", "exp", "--rho", "-0.5", "--y", "-0.2,0.1"]).unwrap();
        assert!(cli.command.flags().contains(&("y", "-0.2,0.1".to_string())));
    }
}
