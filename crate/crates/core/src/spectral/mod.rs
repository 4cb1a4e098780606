//! Rectangle discretization with a Neumann cosine eigenbasis.
//!
//! Everything downstream (the time stepper, the noise, every norm) works in
//! the basis of L2-orthonormal eigenfunctions of `-Delta` with homogeneous
//! Neumann data:
//!
//! ```text
//! e_k(x, y) = c_kx c_ky cos(kx pi x / lx) cos(ky pi y / ly),   -Delta e_k = mu_k e_k
//! ```
//!
//! with `c_0 = 1/sqrt(l)` and `c_k = sqrt(2/l)` along each axis. A
//! [`SpectralField`] stores the coefficients `u_hat_k = <u, e_k>`, so that
//! `||u||_{L2}^2 = sum u_hat_k^2` and `mean(u) = u_hat_0 / sqrt(|D|)`.

mod field;
mod grid;
pub mod transform;

pub use field::{mean_zero_tolerance, SpectralField};
pub use grid::{DomainGrid, MIN_NODES};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("field has mean {mean:e}, exceeding the mean-zero tolerance {tolerance:e}")]
    MeanNotZero { mean: f64, tolerance: f64 },
    #[error("L^p norm requires p >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("fields live on different grids")]
    GridMismatch,
}
