//! Reverse water-filling of a distortion budget over innovation eigenvalues.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{bisect, NumericsError, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaterfillError {
    #[error("distortion budget must be positive and finite, got {0}")]
    Budget(f64),
    #[error("eigenvalue {index} is {value}; all eigenvalues must be positive")]
    Eigenvalue { index: usize, value: f64 },
    #[error("rate must be non-negative and finite, got {0}")]
    Rate(f64),
    #[error("dimension {0} has zero distortion: rate is infinite")]
    InfiniteRate(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillAllocation {
    pub lambda: Vector,
    /// Water level ξ.
    pub xi: f64,
    /// Per-dimension distortion `δ_i = min(ξ, λ_i)`.
    pub delta: Vector,
    /// Gains `η_i = 1 − δ_i/λ_i`.
    pub eta: Vector,
    pub total_distortion: f64,
    pub rate_nats: f64,
}

impl WaterfillAllocation {
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// Dimensions that carry information (`η_i > 0`).
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.eta.iter().enumerate().filter(|(_, e)| **e > 0.0).map(|(i, _)| i)
    }

    /// True when every dimension sits at the water level (`δ_i = D/p`).
    pub fn is_flat(&self) -> bool {
        self.lambda.iter().all(|&l| l > self.xi)
    }
}

fn check_lambda(lambda: &[f64]) -> Result<(), WaterfillError> {
    for (index, &value) in lambda.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(WaterfillError::Eigenvalue { index, value });
        }
    }
    Ok(())
}

/// Splits the budget `D` as `δ_i = min(ξ, λ_i)` with `Σ δ_i = D`.
///
/// The water level is found by an exact piecewise-linear solve over the
/// sorted eigenvalues. When `D ≥ Σλ` nothing needs to be sent: `δ = λ`,
/// `ξ = max λ` and the rate is zero.
pub fn reverse_waterfill(lambda: &[f64], budget: f64) -> Result<WaterfillAllocation, WaterfillError> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(WaterfillError::Budget(budget));
    }
    check_lambda(lambda)?;
    let p = lambda.len();
    let total: f64 = lambda.iter().sum();

    let xi = if budget >= total {
        lambda.iter().copied().fold(0.0, f64::max)
    } else {
        let mut sorted = lambda.to_vec();
        sorted.sort_by(f64::total_cmp);
        // With the k smallest eigenvalues saturated, the rest share D − S_k.
        let mut saturated = 0.0;
        let mut level = budget / p as f64;
        for k in 0..p {
            let candidate = (budget - saturated) / (p - k) as f64;
            if candidate <= sorted[k] {
                level = candidate;
                break;
            }
            saturated += sorted[k];
        }
        level
    };

    let delta: Vector = lambda.iter().map(|&l| l.min(xi)).collect();
    let eta: Vector = lambda
        .iter()
        .zip(&delta)
        .map(|(&l, &d)| (1.0 - d / l).clamp(0.0, 1.0))
        .collect();
    let rate_nats = half_log_ratio(lambda, &delta);
    Ok(WaterfillAllocation {
        lambda: lambda.to_vec(),
        xi,
        total_distortion: delta.iter().sum(),
        delta,
        eta,
        rate_nats,
    })
}

fn half_log_ratio(lambda: &[f64], delta: &[f64]) -> f64 {
    0.5 * lambda
        .iter()
        .zip(delta)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&l, &d)| (l / d).ln())
        .sum::<f64>()
}

/// `½ Σ ln(λ_i/δ_i)` in nats.
pub fn rate_of(allocation: &WaterfillAllocation) -> Result<f64, WaterfillError> {
    if let Some(i) = allocation.delta.iter().position(|&d| d <= 0.0) {
        return Err(WaterfillError::InfiniteRate(i));
    }
    Ok(half_log_ratio(&allocation.lambda, &allocation.delta))
}

/// Inverts the rate: the budget `D` whose water-fill rate equals `rate`.
///
/// Uses `D = p (Πλ_i e^{−2R})^{1/p}` when that lands in the flat region
/// (`D/p < min λ`), otherwise bisects on `D ∈ (0, Σλ]`.
pub fn distortion_of_rate(lambda: &[f64], rate: f64) -> Result<f64, WaterfillError> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(WaterfillError::Rate(rate));
    }
    check_lambda(lambda)?;
    let total: f64 = lambda.iter().sum();
    if rate == 0.0 {
        return Ok(total);
    }
    let p = lambda.len() as f64;
    let log_det: f64 = lambda.iter().map(|l| l.ln()).sum();
    let flat = p * ((log_det - 2.0 * rate) / p).exp();
    let min_lambda = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    if flat / p < min_lambda {
        return Ok(flat);
    }
    let f = |d: f64| match reverse_waterfill(lambda, d) {
        Ok(a) => a.rate_nats - rate,
        Err(_) => f64::INFINITY,
    };
    // Rate is strictly decreasing on (0, Σλ).
    Ok(bisect(f, total * 1e-300, total, 1e-15, 2_000)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn symmetric_split() {
        let a = reverse_waterfill(&[1.0, 1.0], 1.0).unwrap();
        assert!((a.xi - 0.5).abs() < 1e-15);
        assert_eq!(a.delta, vec![0.5, 0.5]);
        assert_eq!(a.eta, vec![0.5, 0.5]);
        assert!((a.rate_nats - LN_2).abs() < 1e-15);
    }

    #[test]
    fn one_dimension_saturated() {
        let a = reverse_waterfill(&[4.0, 1.0], 2.0).unwrap();
        assert!((a.xi - 1.0).abs() < 1e-15);
        assert_eq!(a.delta, vec![1.0, 1.0]);
        assert_eq!(a.eta, vec![0.75, 0.0]);
        assert!((a.rate_nats - 0.5 * 4f64.ln()).abs() < 1e-15);
        assert!(!a.is_flat());
    }

    #[test]
    fn budget_covers_everything() {
        let a = reverse_waterfill(&[4.0, 1.0], 5.0).unwrap();
        assert_eq!(a.delta, vec![4.0, 1.0]);
        assert_eq!(a.eta, vec![0.0, 0.0]);
        assert_eq!(a.rate_nats, 0.0);
        assert_eq!(a.xi, 4.0);
        let a = reverse_waterfill(&[4.0, 1.0], 50.0).unwrap();
        assert_eq!(a.total_distortion, 5.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(reverse_waterfill(&[1.0], 0.0), Err(WaterfillError::Budget(_))));
        assert!(matches!(reverse_waterfill(&[1.0], -1.0), Err(WaterfillError::Budget(_))));
        assert!(matches!(
            reverse_waterfill(&[1.0, 0.0], 1.0),
            Err(WaterfillError::Eigenvalue { index: 1, .. })
        ));
        assert!(matches!(distortion_of_rate(&[1.0], -0.1), Err(WaterfillError::Rate(_))));
    }

    #[test]
    fn rate_of_examples() {
        let mut a = reverse_waterfill(&[4.0, 1.0], 5.0).unwrap();
        assert_eq!(rate_of(&a).unwrap(), 0.0);
        a = reverse_waterfill(&[1.0, 1.0], 1.0).unwrap();
        assert!((rate_of(&a).unwrap() - LN_2).abs() < 1e-15);
        a = reverse_waterfill(&[4.0, 1.0], 2.0).unwrap();
        assert!((rate_of(&a).unwrap() - LN_2).abs() < 1e-15);
        a.delta[1] = 0.0;
        assert!(matches!(rate_of(&a), Err(WaterfillError::InfiniteRate(1))));
    }

    #[test]
    fn distortion_of_rate_examples() {
        assert_eq!(distortion_of_rate(&[4.0, 1.0], 0.0).unwrap(), 5.0);
        assert!((distortion_of_rate(&[1.0, 1.0], LN_2).unwrap() - 1.0).abs() < 1e-12);
        // Not flat: bisection branch.
        assert!((distortion_of_rate(&[4.0, 1.0], LN_2).unwrap() - 2.0).abs() < 1e-12);
    }
}
