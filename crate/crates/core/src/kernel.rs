//! Riemann-Liouville Volterra kernel, its Haar-mollified version and the
//! renormalization functions that go with it.
//!
//! All times live on the unit horizon `[0, 1]`. Every function here is pure.

use std::fmt;

use crate::error::{Error, Result};

/// Default cap on the Haar level; `2^N` coefficients are held per sample.
pub const N_MAX_DEFAULT: u32 = 20;

/// Hurst parameter `H` in `(0, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 && h <= 0.5 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!("Hurst parameter must lie in (0, 1/2], got {h}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Exponent `H + 1/2` of the integrated kernel.
    #[inline]
    pub fn alpha(self) -> f64 {
        self.0 + 0.5
    }

    /// `sqrt(2H) / (H + 1/2)`, the prefactor of every kernel moment.
    #[inline]
    pub fn moment_scale(self) -> f64 {
        (2.0 * self.0).sqrt() / self.alpha()
    }
}

impl fmt::Display for Hurst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Haar grid level `N`, grid step `eps = 2^-N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HaarLevel(u32);

impl HaarLevel {
    pub fn new(n: u32) -> Result<Self> {
        Self::with_cap(n, N_MAX_DEFAULT)
    }

    pub fn with_cap(n: u32, cap: u32) -> Result<Self> {
        if n > cap {
            return Err(Error::Capacity { level: n, max: cap });
        }
        Ok(Self(n))
    }

    #[inline]
    pub fn n(self) -> u32 {
        self.0
    }

    /// Number of Haar cells, `2^N`.
    #[inline]
    pub fn cells(self) -> usize {
        1usize << self.0
    }

    #[inline]
    pub fn eps(self) -> f64 {
        (-(self.0 as f64)).exp2()
    }

    /// `2^{N/2}`, the height of a normalized father wavelet.
    #[inline]
    pub fn sqrt_scale(self) -> f64 {
        (self.0 as f64 * 0.5).exp2()
    }

    /// Next coarser level, if any.
    pub fn coarser(self) -> Option<Self> {
        self.0.checked_sub(1).map(Self)
    }
}

impl fmt::Display for HaarLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of the Haar cell containing `t`, i.e. `floor(t 2^N)`.
///
/// Multiplying by a power of two is exact in binary floating point, so a
/// dyadic grid point always lands in its own cell.
#[inline]
pub fn cell_index(lvl: HaarLevel, t: f64) -> i64 {
    (t * lvl.cells() as f64).floor() as i64
}

/// Cell index at level `lvl` of the dyadic time `k 2^-level_k`, in exact
/// integer arithmetic.
pub fn dyadic_cell(k: u64, level_k: u32, lvl: HaarLevel) -> u64 {
    if level_k >= lvl.n() {
        k >> (level_k - lvl.n())
    } else {
        k << (lvl.n() - level_k)
    }
}

/// Renormalization choice for the Wong-Zakai integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RenormScheme {
    /// The eps-periodic diagonal `C^eps(t) = K^eps(t, t)`.
    #[default]
    NonConstant,
    /// Its cell average `C_eps`.
    Constant,
}

impl RenormScheme {
    pub fn value(self, h: Hurst, lvl: HaarLevel, t: f64) -> f64 {
        match self {
            RenormScheme::NonConstant => renorm_nonconstant(h, lvl, t),
            RenormScheme::Constant => renorm_constant(h, lvl),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RenormScheme::NonConstant => "nonconstant",
            RenormScheme::Constant => "constant",
        }
    }
}

impl std::str::FromStr for RenormScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nonconstant" | "non-constant" => Ok(RenormScheme::NonConstant),
            "constant" => Ok(RenormScheme::Constant),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}` (expected nonconstant|constant)"
            ))),
        }
    }
}

impl fmt::Display for RenormScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `K(s, t) = sqrt(2H) (t - s)^{H - 1/2}` for `t > s`, zero otherwise.
pub fn volterra_kernel(h: Hurst, s: f64, t: f64) -> f64 {
    if t > s {
        (2.0 * h.value()).sqrt() * (t - s).powf(h.value() - 0.5)
    } else {
        0.0
    }
}

/// `int_a^b K(s, t) ds`, with the kernel cut off at `s = t`.
#[inline]
pub fn kernel_moment(h: Hurst, t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        return 0.0;
    }
    let alpha = h.alpha();
    let upper = (t - b).max(0.0);
    h.moment_scale() * ((t - a).powf(alpha) - upper.powf(alpha))
}

/// `x^alpha - (x - 1)^alpha` for `x >= 1`, without cancellation for large `x`.
#[inline]
pub fn power_increment(alpha: f64, x: f64) -> f64 {
    debug_assert!(x >= 1.0);
    -x.powf(alpha) * (alpha * (-1.0 / x).ln_1p()).exp_m1()
}

/// Haar-mollified kernel `K^eps(u, v)`.
pub fn mollified_kernel_haar(h: Hurst, lvl: HaarLevel, u: f64, v: f64) -> f64 {
    let eps = lvl.eps();
    let left = cell_index(lvl, v) as f64 * eps;
    if left > u {
        return 0.0;
    }
    let right = (left + eps).min(u);
    let alpha = h.alpha();
    h.moment_scale() * lvl.cells() as f64 * ((u - left).abs().powf(alpha) - (u - right).abs().powf(alpha))
}

/// Diagonal renormalization function `C^eps(t) = K^eps(t, t)`; eps-periodic and zero on the grid.
pub fn renorm_nonconstant(h: Hurst, lvl: HaarLevel, t: f64) -> f64 {
    let left = cell_index(lvl, t) as f64 * lvl.eps();
    h.moment_scale() * lvl.cells() as f64 * (t - left).abs().powf(h.alpha())
}

/// Cell mean of [`renorm_nonconstant`]: `c_H 2^{N(1/2 - H)}`.
pub fn renorm_constant(h: Hurst, lvl: HaarLevel) -> f64 {
    c_h_constant(h) * (lvl.n() as f64 * (0.5 - h.value())).exp2()
}

/// Skew constant `c_H = sqrt(2H) / ((H + 1/2)(H + 3/2))`.
pub fn c_h_constant(h: Hurst) -> f64 {
    let hv = h.value();
    (2.0 * hv).sqrt() / ((hv + 0.5) * (hv + 1.5))
}
