//! Finite-alphabet nonanticipative rate distortion.
//!
//! A reconstruction kernel factors as `Π_i q_i(y_i | y^{i−1}, x^i)`. The
//! solver finds the optimal kernel for a distortion target by alternating
//! between the kernel and its output conditionals `ν_i(y_i | y^{i−1})`,
//! with a bisection on the Lagrange multiplier `s ≤ 0`. Independent
//! oracles (mirror-descent brute force, classical Blahut–Arimoto) and
//! diagnostic evaluators live alongside.
//!
//! Symbol sequences are indexed lexicographically, first letter most
//! significant, matching [`crate::source_model::FiniteSource::enumerate_paths`].

mod joint;
mod oracle;
mod solver;
mod tables;

use thiserror::Error;

use crate::source_model::SourceError;

pub use joint::{
    average_distortion, check_markov_conditions, check_markov_equivalence, gateaux_derivative, induced_joint,
    induced_joint_general, mutual_information, total_distortion, JointLaw, MarkovReport,
};
pub use oracle::{blahut_arimoto, brute_force_oracle, BlahutArimoto, OracleOptions, OracleResult};
pub use solver::{
    fixed_point_kernel, solve_for_distortion, FixedPoint, KernelOptions, SolverResult, UpdateRule, S_LIMIT,
};
pub use tables::{CausalKernel, OutputLaw, KERNEL_ENTRY_CAP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("{what} needs {count} entries, above the cap of {cap}")]
    TooLarge { what: &'static str, count: usize, cap: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid conditional distribution: {0}")]
    Distribution(String),
    #[error("invalid argument: {0}")]
    Domain(String),
}

/// Sequence → lexicographic index.
pub(crate) fn encode(seq: &[usize], card: usize) -> usize {
    seq.iter().fold(0, |acc, &s| acc * card + s)
}

pub(crate) fn pow(base: usize, exp: usize) -> Result<usize, KernelError> {
    crate::source_model::checked_pow(base, exp).ok_or(KernelError::TooLarge {
        what: "alphabet power",
        count: usize::MAX,
        cap: usize::MAX,
    })
}

/// `Σ p ln(p/q)` with `0 ln 0 = 0`.
pub(crate) fn xlogy_ratio(p: f64, q: f64) -> f64 {
    if p <= tables::ZERO_PROB {
        0.0
    } else {
        p * (p / q).ln()
    }
}
