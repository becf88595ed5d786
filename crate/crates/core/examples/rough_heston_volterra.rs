//! Rough Heston variance paths from the renormalized Volterra scheme, plus
//! a comparison of the two within-cell steppers.

use roughvol::kernel::{HaarLevel, Hurst, RenormScheme};
use roughvol::noise::HaarWhiteNoise;
use roughvol::volterra::{simulate_paths, write_volterra_paths, Stepper, VolterraCoeffs, VolterraSolver};

fn main() -> roughvol::Result<()> {
    let h = Hurst::new(0.3)?;
    let lvl = HaarLevel::new(7)?;
    // v0, vol-of-vol, mean reversion, long-run level, square-root floor
    let coeffs = VolterraCoeffs::rough_heston(0.04, 0.3, 1.5, 0.04, 1e-6)?;
    let solver = VolterraSolver::new(h, lvl, RenormScheme::NonConstant, Stepper::SecondOrder)?;

    let grid: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
    let paths = simulate_paths(&solver, &coeffs, &grid, 3, 5)?;
    write_volterra_paths(std::io::stdout().lock(), &grid, &paths)?;

    let many = simulate_paths(&solver, &coeffs, &[1.0], 5000, 6)?;
    let mean = many.iter().map(|p| p[0]).sum::<f64>() / many.len() as f64;
    println!("\nmean V(1) over {} paths: {mean:.5} (started at 0.04, long-run level 0.04)", many.len());

    let left = VolterraSolver::new(h, lvl, RenormScheme::NonConstant, Stepper::LeftPoint)?;
    let noise = HaarWhiteNoise::generate(lvl, 9, 0);
    let a = solver.solve_grid(&noise, &coeffs)?;
    let b = left.solve_grid(&noise, &coeffs)?;
    println!("same noise, Z(1): second-order {:.6}, left-point {:.6}", a.grid[lvl.cells()], b.grid[lvl.cells()]);
    Ok(())
}
