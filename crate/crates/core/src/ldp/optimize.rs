//! BFGS with Armijo backtracking, where the objective may refuse a trial point.

/// Stopping and line-search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Converged once the largest gradient component is below this.
    pub gtol: f64,
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self { max_iter: 500, gtol: 1e-9, c1: 1e-4, max_backtracks: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Trial points the objective refused.
    pub rejected: usize,
}

impl BfgsOutcome {
    pub fn grad_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimize `f` from `x0`. `f` returns `None` for inadmissible points;
/// returns `None` only if `x0` itself is inadmissible.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> Option<BfgsOutcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    // inverse Hessian approximation, row-major
    let mut hinv = vec![0.0; n * n];
    for i in 0..n {
        hinv[i * n + i] = 1.0;
    }
    let mut first = true;
    let mut rejected = 0;
    let mut stalled = false;
    let mut iterations = 0;
    let mut p = vec![0.0; n];
    let mut trial = vec![0.0; n];
    while iterations < cfg.max_iter && inf_norm(&g) > cfg.gtol {
        iterations += 1;
        for i in 0..n {
            p[i] = -dot(&hinv[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&p, &g);
        if slope >= 0.0 {
            // lost descent; restart from steepest descent
            hinv.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                hinv[i * n + i] = 1.0;
                p[i] = -g[i];
            }
            first = true;
            slope = -dot(&g, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            for i in 0..n {
                trial[i] = x[i] + step * p[i];
            }
            match f(&trial) {
                Some((ft, gt)) if ft <= fx + cfg.c1 * step * slope => {
                    accepted = Some((ft, gt));
                    break;
                }
                Some(_) => {}
                None => rejected += 1,
            }
            step *= 0.5;
        }
        let Some((ft, gt)) = accepted else {
            stalled = true;
            break;
        };
        let s: Vec<f64> = p.iter().map(|v| v * step).collect();
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let improvement = fx - ft;
        x.copy_from_slice(&trial);
        fx = ft;
        g = gt;
        if sy > 1e-300 {
            if first {
                let scale = sy / dot(&yv, &yv);
                hinv.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            // H <- (I - r s y^T) H (I - r y s^T) + r s s^T
            let r = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], &yv)).collect();
            let yhy = dot(&yv, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += -r * (s[i] * hy[j] + hy[i] * s[j]) + (r * r * yhy + r) * s[i] * s[j];
                }
            }
        }
        if improvement <= f64::EPSILON * fx.abs().max(1e-300) && inf_norm(&g) <= 1e-6 {
            stalled = true;
            break;
        }
    }
    let gmax = inf_norm(&g);
    let converged = gmax <= cfg.gtol || (stalled && gmax <= 1e-6);
    Some(BfgsOutcome { x, value: fx, gradient: g, iterations, converged, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((v, g))
        };
        let out = minimize(f, &[-1.2, 1.0], &BfgsConfig::default()).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{:?}", out.x);
    }

    #[test]
    fn respects_rejection() {
        // minimum of (x-2)^2 but points beyond 1 are refused
        let f = |x: &[f64]| (x[0] <= 1.0).then(|| ((x[0] - 2.0).powi(2), vec![2.0 * (x[0] - 2.0)]));
        let out = minimize(f, &[0.0], &BfgsConfig::default()).unwrap();
        assert!(out.x[0] <= 1.0 && out.x[0] > 0.9);
        assert!(out.rejected > 0);
        assert!(!out.converged);
        assert!(minimize(f, &[3.0], &BfgsConfig::default()).is_none());
    }

    #[test]
    fn quadratic_in_many_dimensions() {
        let n = 40;
        let f = |x: &[f64]| {
            let v = x.iter().enumerate().map(|(i, xi)| (i + 1) as f64 * (xi - 0.5).powi(2)).sum();
            let g = x.iter().enumerate().map(|(i, xi)| 2.0 * (i + 1) as f64 * (xi - 0.5)).collect();
            Some((v, g))
        };
        let out = minimize(f, &vec![0.0; n], &BfgsConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.x.iter().all(|v| (v - 0.5).abs() < 1e-9));
    }
}
