//! Numerical laboratory for stochastic reaction-diffusion systems whose
//! reactions are quasipositive and satisfy a triangular mass-control
//! structure.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`] and [`checks`]: reaction systems, noise coefficients, presets,
//!   and certification of their structural assumptions;
//! - [`spectral`]: Laplacian eigenbases, heat kernels and semigroups on
//!   intervals and rectangles;
//! - [`noise`]: spatial covariance kernels and Gaussian increments;
//! - [`truncation`]: the radial retraction used to localize the nonlinearities;
//! - [`solver`]: exponential-Euler paths of the truncated mild solution with
//!   stopping times and stochastic convolutions;
//! - [`montecarlo`]: ensemble statistics (moment tables, blow-up probabilities,
//!   convolution exponents, Hölder regularity).

pub mod checks;
pub mod config;
pub mod error;
pub mod expr;
pub mod fit;
pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod output;
pub mod poly;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod truncation;

pub use error::{Error, Result};
