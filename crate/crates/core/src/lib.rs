//! Causal (nonanticipative) rate-distortion: Gaussian realizations over
//! AWGN channels and finite-alphabet kernel solvers.

pub mod causal_filter;
pub mod exec;
pub mod numerics;
pub mod source_model;
pub mod waterfill;
pub mod rd_curve;
pub mod kernel;
pub mod cli;
