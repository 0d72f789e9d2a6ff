#![allow(dead_code)]

use causal_rd::causal_filter::FilterOptions;
use causal_rd::numerics::{spectral_radius, Matrix, SimRng};
use causal_rd::source_model::{FiniteSource, GaussMarkovSource};

pub fn normal_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Matrix::from_row_major(rows, cols, data).unwrap()
}

/// Stable `A` (spectral radius in [0.3, 0.95]), square `B`, and a lower
/// triangular `N` with diagonal in [0.3, 1] so `NNᵀ` is positive definite.
pub fn random_gauss_source(rng: &mut SimRng, m: usize, p: usize) -> GaussMarkovSource {
    let raw = normal_matrix(rng, m, m);
    let target = rng.uniform(0.3, 0.95);
    let a = raw.scale(target / spectral_radius(&raw).max(1e-3));
    let b = normal_matrix(rng, m, m);
    let c = normal_matrix(rng, p, m);
    let mut n = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..i {
            n[(i, j)] = 0.3 * rng.standard_normal();
        }
        n[(i, i)] = rng.uniform(0.3, 1.0);
    }
    GaussMarkovSource::new(a, b, c, n, vec![0.0; m], Matrix::zeros(m, m)).unwrap()
}

pub fn random_channel(rng: &mut SimRng, p: usize) -> FilterOptions {
    FilterOptions::unit_channel(p).with_channel_noise((0..p).map(|_| rng.uniform(0.5, 2.0)).collect())
}

pub fn random_pmf(rng: &mut SimRng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.uniform_open().ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Markov source over `x_card` symbols with uniform random distortion
/// entries in [0, 1] against `y_card` reconstruction symbols. Draws are
/// repeated until the attainable per-letter range is at least 0.05 wide,
/// which rules out a single dominating reconstruction symbol.
pub fn random_finite_source(rng: &mut SimRng, x_card: usize, y_card: usize, horizon: usize) -> FiniteSource {
    loop {
        let rows: Vec<Vec<f64>> = (0..x_card).map(|_| random_pmf(rng, x_card)).collect();
        let dist: Vec<Vec<f64>> = (0..x_card).map(|_| (0..y_card).map(|_| rng.uniform(0.0, 1.0)).collect()).collect();
        let source = FiniteSource::new(
            random_pmf(rng, x_card),
            Matrix::from_rows(&rows).unwrap(),
            Matrix::from_rows(&dist).unwrap(),
            horizon,
        )
        .unwrap();
        if source.zero_rate_distortion() - source.min_distortion() >= 0.05 {
            return source;
        }
    }
}

/// A target strictly inside the attainable per-letter distortion range.
pub fn interior_target(rng: &mut SimRng, source: &FiniteSource) -> f64 {
    let (lo, hi) = (source.min_distortion(), source.zero_rate_distortion());
    lo + rng.uniform(0.1, 0.9) * (hi - lo)
}

pub fn binary_entropy(p: f64) -> f64 {
    -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
}
