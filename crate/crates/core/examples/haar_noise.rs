//! Haar white noise and the fractional Brownian motion it drives.
//!
//! Prints one path of `(Wdot, W_hat)` on a coarse grid as CSV, then checks
//! that coarsening keeps `W(1)` and that the sample variance of `W_hat(1)`
//! tends to 1 as the level grows.

use roughvol::kernel::{HaarLevel, Hurst};
use roughvol::noise::{fbm_eval, sample_haar_noise, write_haar_paths, HaarWhiteNoise};

fn main() -> roughvol::Result<()> {
    let h = Hurst::new(0.1)?;
    let lvl = HaarLevel::new(6)?;
    let grid: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
    let one = sample_haar_noise(lvl, 1, 2024)?;
    write_haar_paths(std::io::stdout().lock(), &one, h, &grid)?;

    let fine = &one[0];
    let coarse = fine.coarsen_to(HaarLevel::new(2)?)?;
    println!("\nW(1) at level 6: {:.15}", fine.brownian(1.0));
    println!("W(1) at level 2: {:.15}", coarse.brownian(1.0));

    println!("\nlevel  Var(W_hat(1))  (exact: 1)");
    for n in [2, 4, 6, 8] {
        let lvl = HaarLevel::new(n)?;
        let m = 4000;
        let mut acc = 0.0;
        for id in 0..m {
            let w = fbm_eval(&HaarWhiteNoise::generate(lvl, 7, id), h, 1.0)?;
            acc += w * w;
        }
        println!("{n:>5}  {:.4}", acc / m as f64);
    }
    Ok(())
}
