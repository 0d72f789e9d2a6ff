//! Dense linear algebra, root finding and sampling kernels shared by the
//! Gaussian and finite-alphabet solvers.

mod eig;
mod matrix;
mod roots;
mod sampling;

use thiserror::Error;

pub use eig::{is_psd, null_space, spectral_radius, sym_eig, sym_pinv, SymEig, DEFAULT_EIG_TOL, MAX_SWEEPS};
pub use matrix::{add_vec, norm_sq, sub_vec, Matrix, Vector};
pub use roots::{bisect, DEFAULT_BISECT_ITERS, DEFAULT_BISECT_TOL};
pub use sampling::{gaussian_sample, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite entry {0}")]
    NonFinite(f64),
    #[error("matrix is not symmetric (asymmetry {asymmetry:e}, scale {scale:e})")]
    NotSymmetric { asymmetry: f64, scale: f64 },
    #[error("invalid bracket: {0}")]
    Bracket(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
}
