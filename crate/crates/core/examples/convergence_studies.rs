//! Strong, weak and option-price convergence studies at a small sample
//! size. Pass a directory to also write log-log plot data there.
//!
//! The paper-scale settings live in `examples/configs/*.cfg`; run them with
//! `roughvol <study> --config examples/configs/<file>.cfg`.

use roughvol::estimators::QuadratureConfig;
use roughvol::functions::FunctionFamily;
use roughvol::harness::{
    option_rate_study, reference_corrected_rate, strong_error_study, weak_second_moment_study, write_plot_data,
    write_summary_csv, OptionStudyConfig, StrongStudyConfig, StudyKind, WeakStudyConfig,
};
use roughvol::kernel::{HaarLevel, RenormScheme};
use roughvol::pricing::{MarketSpec, PsiVariant};

fn main() -> roughvol::Result<()> {
    let quad = QuadratureConfig::PointsPerCell(9);
    let mut all = strong_error_study(&StrongStudyConfig {
        h_list: vec![0.1, 0.3, 0.45],
        n_list: (3..=6).collect(),
        n_ref: 8,
        f: FunctionFamily::Exp,
        scheme: RenormScheme::NonConstant,
        m_samples: 2000,
        quad,
        seed: 1,
    })?;
    all.push(weak_second_moment_study(&WeakStudyConfig {
        hurst: 0.3,
        n_list: (3..=7).collect(),
        f: FunctionFamily::Exp,
        scheme: RenormScheme::NonConstant,
        m_samples: 2000,
        quad,
        seed: 2,
    })?);
    all.extend(option_rate_study(&OptionStudyConfig {
        mkt: MarketSpec::new(1.0, 1.0, -0.8)?,
        h_list: vec![0.2, 0.4],
        n_list: (3..=6).collect(),
        n_ref: 8,
        f: FunctionFamily::bergomi(0.2, 2.0),
        scheme: RenormScheme::NonConstant,
        psi: PsiVariant::Derived,
        m_samples: 2000,
        quad,
        seed: 3,
    })?);

    write_summary_csv(std::io::stdout().lock(), &all)?;

    let eps_ref = HaarLevel::new(8)?.eps();
    println!("\nrates corrected for the finite reference level:");
    for r in all.iter().filter(|r| r.study != StudyKind::Weak) {
        let p = if r.study == StudyKind::Strong { 2.0 } else { 1.0 };
        println!("{:<7} H={:<5} {:.3}", r.study, r.hurst, reference_corrected_rate(&r.rows, eps_ref, p)?);
    }

    if let Some(dir) = std::env::args().nth(1) {
        write_plot_data(std::path::Path::new(&dir), &all)?;
        println!("\nplot data written to {dir}");
    }
    Ok(())
}
