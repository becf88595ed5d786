//! Short-time large deviations: the rate function `I(y)` for rough Bergomi
//! by direct minimisation over piecewise-constant controls, and the
//! at-the-money implied-skew asymptotics.

use roughvol::functions::FunctionFamily;
use roughvol::kernel::Hurst;
use roughvol::ldp::{rate_curve, skew_formula, write_rate_csv, BfgsConfig, LdpProblem};

fn main() -> roughvol::Result<()> {
    let h = Hurst::new(0.1)?;
    let (sigma0, eta, rho) = (0.2, 2.0, -0.8);
    let prob = LdpProblem::simple(FunctionFamily::bergomi(sigma0, eta), rho, h, 64)?;
    let ys: Vec<f64> = (-6..=6).map(|i| i as f64 / 20.0).collect();
    let curve = rate_curve(&ys, &prob, BfgsConfig::default())?;
    write_rate_csv(std::io::stdout().lock(), &curve)?;

    // with rho < 0, large negative log-returns are cheaper than positive ones
    let lo = &curve[0];
    let hi = &curve[curve.len() - 1];
    println!("\nI({}) = {:.4}, I({}) = {:.4}", lo.y, lo.value, hi.y, hi.value);

    println!("\n   t      skew ~ t^(H - 1/2)");
    for t in [0.01, 0.05, 0.25] {
        println!("{t:>5}   {:.4}", skew_formula(h, rho, eta, sigma0 * sigma0, t)?);
    }
    Ok(())
}
