//! Exact joint simulation of `(W, W_hat)` by Cholesky factorisation, the
//! classical alternative to the Haar scheme.

use roughvol::kernel::Hurst;
use roughvol::noise::{build_joint_covariance, sample_joint, write_joint_paths};

fn main() -> roughvol::Result<()> {
    let h = Hurst::new(0.2)?;
    let grid: Vec<f64> = (1..=8).map(|k| k as f64 / 8.0).collect();
    let jg = build_joint_covariance(h, &grid)?;
    println!("# Cholesky jitter: {:e}", jg.jitter);

    let paths = sample_joint(&jg, 3, 11);
    write_joint_paths(std::io::stdout().lock(), &jg, &paths)?;

    // empirical check of the terminal covariance block
    let big = sample_joint(&jg, 20_000, 12);
    let n = grid.len();
    let (mut ww, mut hh, mut wh) = (0.0, 0.0, 0.0);
    for p in &big {
        ww += p.w[n - 1] * p.w[n - 1];
        hh += p.w_hat[n - 1] * p.w_hat[n - 1];
        wh += p.w[n - 1] * p.w_hat[n - 1];
    }
    let m = big.len() as f64;
    println!("\n        sample    exact");
    println!("W W     {:.4}    {:.4}", ww / m, jg.covariance[(n - 1, n - 1)]);
    println!("Wh Wh   {:.4}    {:.4}", hh / m, jg.covariance[(2 * n - 1, 2 * n - 1)]);
    println!("W Wh    {:.4}    {:.4}", wh / m, jg.covariance[(n - 1, 2 * n - 1)]);
    Ok(())
}
