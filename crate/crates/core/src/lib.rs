//! Haar-wavelet Wong-Zakai Monte Carlo for rough volatility.
//!
//! The driving Brownian motion is replaced by its level-`N` Haar
//! approximation, stochastic integrals against the rough volatility process
//! become Riemann integrals with an explicit renormalization, and everything
//! downstream (pricing, Volterra paths, convergence studies) is built on
//! that. See the `examples/` directory for one program per capability.

pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod functions;
pub mod harness;
pub mod kernel;
pub mod ldp;
pub mod mc;
pub mod noise;
pub mod pricing;
pub mod quad;
pub mod rng;
pub mod selftest;
pub mod volterra;

pub use error::{Error, Result};
