//! Nonanticipative rate-distortion curves of Gauss-Markov sources.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::causal_filter::{open_loop_covariance, stationary_solution, FilterError, FilterOptions, StationarySolution};
use crate::exec::Execution;
use crate::numerics::{bisect, NumericsError};
use crate::source_model::GaussMarkovSource;

/// Lower end of the inversion bracket as a fraction of `tr(Λ_pred)`.
pub const INVERSE_BRACKET_FLOOR: f64 = 1e-9;
const INVERSE_ITERS: usize = 200;
const LYAPUNOV_MAX_ITER: usize = 1_000_000;
const DOUBLINGS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RDPoint {
    #[serde(rename = "D")]
    pub distortion: f64,
    pub rate_nats: f64,
    pub rate_bits: f64,
    pub power: f64,
    pub converged: bool,
}

impl RDPoint {
    fn from_solution(distortion: f64, sol: &StationarySolution) -> Self {
        Self {
            distortion,
            rate_nats: sol.rate_nats,
            rate_bits: sol.rate_nats / LN_2,
            power: sol.power,
            converged: true,
        }
    }

    fn failed(distortion: f64) -> Self {
        Self {
            distortion,
            rate_nats: f64::NAN,
            rate_bits: f64::NAN,
            power: f64::NAN,
            converged: false,
        }
    }
}

/// Stationary rate at distortion `D`; a non-convergent Riccati iteration
/// yields a point with `converged = false` instead of an error.
pub fn rna_of_distortion(source: &GaussMarkovSource, distortion: f64, opts: &FilterOptions) -> Result<RDPoint, FilterError> {
    match stationary_solution(source, distortion, opts) {
        Ok(sol) => Ok(RDPoint::from_solution(distortion, &sol)),
        Err(FilterError::NotConverged { .. }) => Ok(RDPoint::failed(distortion)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseResult {
    pub point: RDPoint,
    /// `p (|Λ∞| e^{−2R})^{1/p}` at the returned fixed point, when every
    /// dimension sits at the water level.
    pub closed_form_distortion: Option<f64>,
    pub bracket: (f64, f64),
}

/// Trace of the zero-rate innovation covariance `C Σ_ol Cᵀ + NNᵀ`, where
/// `Σ_ol` solves the open-loop Lyapunov equation.
pub fn zero_rate_distortion(source: &GaussMarkovSource, opts: &FilterOptions) -> Result<f64, FilterError> {
    let sigma = open_loop_covariance(source, opts.tol, LYAPUNOV_MAX_ITER)?;
    Ok((&source.c.congruence(&sigma) + &source.obs_noise_cov()).trace())
}

/// Distortion whose stationary rate equals `rate`, by bisection on `ln D`.
///
/// The bracket is `[1e−9·tr(Λ_pred), tr(Λ_pred)]`. If `A` is unstable the
/// zero-rate limit does not exist; the upper end is then found by doubling
/// from `tr(CBBᵀCᵀ + NNᵀ)` until the rate drops below the target.
pub fn rna_inverse(source: &GaussMarkovSource, rate: f64, opts: &FilterOptions) -> Result<InverseResult, FilterError> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(FilterError::Domain(format!("rate must be non-negative and finite, got {rate}")));
    }
    let rate_at = |d: f64| -> Result<f64, FilterError> { Ok(stationary_solution(source, d, opts)?.rate_nats) };

    let hi = match zero_rate_distortion(source, opts) {
        Ok(trace) => trace,
        Err(FilterError::NotConverged { .. }) => {
            let mut hi = (&source.c.congruence(&source.process_cov()) + &source.obs_noise_cov()).trace();
            let mut found = false;
            for _ in 0..DOUBLINGS {
                match rate_at(hi) {
                    Ok(r) if r <= rate => {
                        found = true;
                        break;
                    }
                    Ok(_) => hi *= 2.0,
                    Err(_) => break,
                }
            }
            if !found {
                return Err(NumericsError::Bracket(format!(
                    "rate {rate} nats is below every achievable stationary rate of this unstable source"
                ))
                .into());
            }
            hi
        }
        Err(e) => return Err(e),
    };
    let lo = INVERSE_BRACKET_FLOOR * hi;

    let distortion = if rate == 0.0 {
        hi
    } else {
        let rate_lo = rate_at(lo)?;
        if rate_lo < rate {
            return Err(NumericsError::Bracket(format!(
                "rate {rate} nats exceeds the rate {rate_lo} nats at the smallest bracketed distortion {lo:e}"
            ))
            .into());
        }
        // Convergence failures inside the bracket surface after the search.
        let mut failure = None;
        let u = bisect(
            |u| match rate_at(u.exp()) {
                Ok(r) => r - rate,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            lo.ln(),
            hi.ln(),
            1e-13,
            INVERSE_ITERS,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        u?.exp()
    };

    let sol = stationary_solution(source, distortion, opts)?;
    let alloc = &sol.operators().allocation;
    let closed_form_distortion = (alloc.is_flat() && sol.rate_nats > 0.0).then(|| {
        let p = alloc.dim() as f64;
        let log_det: f64 = alloc.lambda.iter().map(|l| l.ln()).sum();
        p * ((log_det - 2.0 * sol.rate_nats) / p).exp()
    });
    Ok(InverseResult {
        point: RDPoint::from_solution(distortion, &sol),
        closed_form_distortion,
        bracket: (lo, hi),
    })
}

/// One [`RDPoint`] per grid value. Points whose solve fails are returned
/// with `converged = false`; the sweep itself only fails on a bad grid.
pub fn sweep(
    source: &GaussMarkovSource,
    grid: &[f64],
    opts: &FilterOptions,
    exec: Execution,
) -> Result<Vec<RDPoint>, FilterError> {
    if grid.is_empty() {
        return Err(FilterError::Domain("distortion grid is empty".into()));
    }
    if grid.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(FilterError::Domain("distortion grid values must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FilterError::Domain("distortion grid must be strictly ascending".into()));
    }
    Ok(exec.map(grid, |&d| {
        rna_of_distortion(source, d, opts).unwrap_or_else(|_| RDPoint::failed(d))
    }))
}
