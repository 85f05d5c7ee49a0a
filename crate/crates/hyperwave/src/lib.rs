//! Numerical laboratory for wave propagators and quantum variance on compact
//! hyperbolic surfaces.
//!
//! The crate is organised bottom-up: [`hypgeo`] holds upper half-plane
//! geometry, [`fuchsian`] the surface groups and their finite covers,
//! [`kernels`] the scalar wave kernels and integral estimates, [`opcalc`] a
//! dense functional-calculus oracle, [`spectral`] the point-cloud
//! discretization of `−Δ + V`, [`geoflow`] the geodesic flow and [`qvar`] the
//! variance sums.

pub mod error;
pub mod fuchsian;
pub mod geoflow;
pub mod hypgeo;
pub mod kernels;
pub mod lemmas;
pub mod opcalc;
pub mod qvar;
pub mod quad;
pub mod spectral;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}
