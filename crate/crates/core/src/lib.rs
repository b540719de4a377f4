//! Numerical experiments on rough line integrals `∫ φ(X) dY` driven by
//! fractional Brownian motion with Hurst exponent in `(1/4, 1/2)`.

pub mod cli;
pub mod error;
pub mod fbm;
pub mod functionals;
pub mod rng;
pub mod roughint;
pub mod stats;
pub mod tail;
pub mod weierstrass;

pub use error::{Error, Result};
