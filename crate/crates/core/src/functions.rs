//! Volatility maps `f(x, t)` with their spatial derivatives.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::kernel::Hurst;

/// Exponents are clamped to this magnitude before `exp`.
pub const EXP_CLAMP: f64 = 700.0;

static CLAMP_HITS: AtomicU64 = AtomicU64::new(0);

/// Number of exponent clamps since process start (or the last reset).
pub fn exponent_clamp_count() -> u64 {
    CLAMP_HITS.load(Ordering::Relaxed)
}

pub fn reset_exponent_clamp_count() {
    CLAMP_HITS.store(0, Ordering::Relaxed);
}

#[inline]
fn clamped_exp(y: f64) -> f64 {
    if y.abs() > EXP_CLAMP {
        CLAMP_HITS.fetch_add(1, Ordering::Relaxed);
        y.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
    } else {
        y.exp()
    }
}

/// A function `f(x, t)` smooth in `x`, with derivatives up to [`max_order`](Self::max_order).
pub trait SmoothFunction: Send + Sync {
    /// `d^m f / dx^m (x, t)`.
    fn eval(&self, m: usize, x: f64, t: f64) -> f64;

    fn max_order(&self) -> usize;

    /// `(f, df/dx)`; override when the two share work.
    fn value_and_slope(&self, x: f64, t: f64) -> (f64, f64) {
        (self.eval(0, x, t), self.eval(1, x, t))
    }

    fn describe(&self) -> String;
}

/// Built-in function families.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionFamily {
    /// `exp(x)`.
    Exp,
    /// `sigma0 exp(eta x / 2)`, so `f^2 = sigma0^2 exp(eta x)`.
    Bergomi { sigma0: f64, eta: f64 },
    Constant(f64),
    /// `a + b x`.
    Linear { a: f64, b: f64 },
    /// `sum_k c_k x^k`.
    Polynomial(Vec<f64>),
    /// `scale * sqrt(s(x))`, `s` a C^2 floor that equals `x` above `floor`.
    Sqrt { floor: f64, scale: f64 },
}

/// Derivative order reported for analytic families.
const UNBOUNDED_ORDER: usize = 64;

impl FunctionFamily {
    pub fn exp() -> Self {
        FunctionFamily::Exp
    }

    pub fn bergomi(sigma0: f64, eta: f64) -> Self {
        FunctionFamily::Bergomi { sigma0, eta }
    }

    pub fn constant(c: f64) -> Self {
        FunctionFamily::Constant(c)
    }

    pub fn linear(a: f64, b: f64) -> Self {
        FunctionFamily::Linear { a, b }
    }

    pub fn sqrt(floor: f64) -> Result<Self> {
        Self::scaled_sqrt(floor, 1.0)
    }

    pub fn scaled_sqrt(floor: f64, scale: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::Domain(format!("sqrt floor must be positive, got {floor}")));
        }
        Ok(FunctionFamily::Sqrt { floor, scale })
    }

    /// Whether `f` is constant in `x`.
    pub fn is_constant(&self) -> bool {
        match self {
            FunctionFamily::Constant(_) => true,
            FunctionFamily::Linear { b, .. } => *b == 0.0,
            FunctionFamily::Polynomial(c) => c.iter().skip(1).all(|&v| v == 0.0),
            _ => false,
        }
    }

    // s(x) and its first two derivatives for the sqrt floor
    fn floored(floor: f64, x: f64) -> (f64, f64, f64) {
        let lo = 0.5 * floor;
        if x >= floor {
            (x, 1.0, 0.0)
        } else if x <= lo {
            (0.75 * floor, 0.0, 0.0)
        } else {
            let u = (x - lo) / lo;
            let s = 0.75 * floor + floor * (0.5 * u.powi(3) - 0.25 * u.powi(4));
            let ds = 3.0 * u * u - 2.0 * u.powi(3);
            let d2s = 6.0 * (u - u * u) / lo;
            (s, ds, d2s)
        }
    }
}

impl SmoothFunction for FunctionFamily {
    fn eval(&self, m: usize, x: f64, _t: f64) -> f64 {
        match self {
            FunctionFamily::Exp => clamped_exp(x),
            FunctionFamily::Bergomi { sigma0, eta } => {
                sigma0 * (0.5 * eta).powi(m as i32) * clamped_exp(0.5 * eta * x)
            }
            FunctionFamily::Constant(c) => {
                if m == 0 {
                    *c
                } else {
                    0.0
                }
            }
            FunctionFamily::Linear { a, b } => match m {
                0 => a + b * x,
                1 => *b,
                _ => 0.0,
            },
            FunctionFamily::Polynomial(coeffs) => {
                // m-th derivative by Horner on the falling-factorial-weighted coefficients
                let mut acc = 0.0;
                for k in (m..coeffs.len()).rev() {
                    let weight: f64 = ((k - m + 1)..=k).map(|v| v as f64).product();
                    acc = acc * x + coeffs[k] * weight;
                }
                acc
            }
            FunctionFamily::Sqrt { floor, scale } => {
                let (s, ds, d2s) = Self::floored(*floor, x);
                let r = s.sqrt();
                match m {
                    0 => scale * r,
                    1 => scale * ds / (2.0 * r),
                    2 => scale * (d2s / (2.0 * r) - ds * ds / (4.0 * s * r)),
                    _ => f64::NAN,
                }
            }
        }
    }

    fn max_order(&self) -> usize {
        match self {
            FunctionFamily::Sqrt { .. } => 2,
            _ => UNBOUNDED_ORDER,
        }
    }

    fn value_and_slope(&self, x: f64, t: f64) -> (f64, f64) {
        match self {
            FunctionFamily::Exp => {
                let e = clamped_exp(x);
                (e, e)
            }
            FunctionFamily::Bergomi { sigma0, eta } => {
                let v = sigma0 * clamped_exp(0.5 * eta * x);
                (v, 0.5 * eta * v)
            }
            _ => (self.eval(0, x, t), self.eval(1, x, t)),
        }
    }

    fn describe(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FunctionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionFamily::Exp => write!(f, "exp"),
            FunctionFamily::Bergomi { sigma0, eta } => write!(f, "bergomi:sigma0={sigma0},eta={eta}"),
            FunctionFamily::Constant(c) => write!(f, "const:c={c}"),
            FunctionFamily::Linear { a, b } => write!(f, "linear:a={a},b={b}"),
            FunctionFamily::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                write!(f, "poly:{}", parts.join(","))
            }
            FunctionFamily::Sqrt { floor, scale } => {
                if *scale == 1.0 {
                    write!(f, "sqrt:floor={floor}")
                } else {
                    write!(f, "sqrt:floor={floor},scale={scale}")
                }
            }
        }
    }
}

fn parse_params(spec: &str, body: &str, allowed: &[&str]) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    if body.trim().is_empty() {
        return Ok(out);
    }
    for part in body.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`{spec}`: expected key=value, got `{part}`")))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(Error::Config(format!("`{spec}`: unknown parameter `{k}`")));
        }
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("`{spec}`: `{v}` is not a number")))?;
        out.push((k.to_string(), v));
    }
    Ok(out)
}

fn param(params: &[(String, f64)], key: &str, default: Option<f64>, spec: &str) -> Result<f64> {
    params
        .iter()
        .rev()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .or(default)
        .ok_or_else(|| Error::Config(format!("`{spec}`: missing parameter `{key}`")))
}

impl FromStr for FunctionFamily {
    type Err = Error;

    /// `exp | bergomi:sigma0=..,eta=.. | const:c=.. | linear:a=..,b=.. | sqrt:floor=..[,scale=..] | poly:c0,c1,..`
    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, body) = spec.split_once(':').unwrap_or((spec, ""));
        match name {
            "exp" => Ok(FunctionFamily::Exp),
            "bergomi" => {
                let p = parse_params(spec, body, &["sigma0", "eta"])?;
                Ok(FunctionFamily::bergomi(param(&p, "sigma0", None, spec)?, param(&p, "eta", None, spec)?))
            }
            "const" => {
                let p = parse_params(spec, body, &["c"])?;
                Ok(FunctionFamily::constant(param(&p, "c", None, spec)?))
            }
            "linear" => {
                let p = parse_params(spec, body, &["a", "b"])?;
                Ok(FunctionFamily::linear(param(&p, "a", Some(0.0), spec)?, param(&p, "b", None, spec)?))
            }
            "sqrt" => {
                let p = parse_params(spec, body, &["floor", "scale"])?;
                FunctionFamily::scaled_sqrt(
                    param(&p, "floor", Some(1e-6), spec)?,
                    param(&p, "scale", Some(1.0), spec)?,
                )
            }
            "poly" => {
                let coeffs = body
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("`{spec}`: `{v}` is not a number")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(FunctionFamily::Polynomial(coeffs))
            }
            other => Err(Error::Config(format!(
                "unknown function family `{other}` (expected exp, bergomi, const, linear, sqrt or poly)"
            ))),
        }
    }
}

/// Smallest expansion order `M` with `(M + 1)(H - kappa) - 1/2 - kappa > 0`.
pub fn min_level_m(h: Hurst, kappa: f64) -> Result<usize> {
    let hv = h.value();
    if !(kappa > 0.0 && kappa < hv) {
        return Err(Error::Domain(format!("kappa must lie in (0, H) = (0, {hv}), got {kappa}")));
    }
    let mut m = 0usize;
    while (m + 1) as f64 * (hv - kappa) - 0.5 - kappa <= 0.0 {
        m += 1;
    }
    Ok(m)
}
