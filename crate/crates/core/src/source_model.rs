//! Source models: the partially observed linear Gauss-Markov system and
//! finite-alphabet first-order Markov sources.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    gaussian_sample, is_psd, null_space, spectral_radius, sym_eig, Matrix, NumericsError, SimRng, Vector,
};

/// Singular values below this fraction of the largest count as zero in the
/// observability/controllability rank tests.
pub const RANK_REL_TOL: f64 = 1e-9;
/// Upper bound on `|𝒳|^{i+1}` when materializing source paths.
pub const DEFAULT_PATH_CAP: usize = 100_000;
const PMF_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("{count} paths exceed the cap of {cap}")]
    TooLarge { count: usize, cap: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `X_{t+1} = A X_t + B W_t`, `Y_t = C X_t + N V_t` with `W_t`, `V_t`
/// independent standard normal and `X_0 ~ N(x0_mean, x0_cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussMarkovSource {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub n: Matrix,
    pub x0_mean: Vector,
    pub x0_cov: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceCheck {
    /// Dimension of the unobservable (resp. uncontrollable) subspace.
    pub deficient_dim: usize,
    /// Spectral radius of `A` restricted to that subspace (0 when empty).
    pub restricted_radius: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub detectability: SubspaceCheck,
    pub stabilizability: SubspaceCheck,
    pub noise_cov_min_eig: f64,
    pub noise_cov_pd: bool,
    pub x0_cov_psd: bool,
    pub spectral_radius_a: f64,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.detectability.passes && self.stabilizability.passes && self.noise_cov_pd && self.x0_cov_psd
    }
}

impl GaussMarkovSource {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, n: Matrix, x0_mean: Vector, x0_cov: Matrix) -> Result<Self, SourceError> {
        let s = Self {
            a,
            b,
            c,
            n,
            x0_mean,
            x0_cov,
        };
        s.check_shapes()?;
        Ok(s)
    }

    /// Scalar system with zero-mean, zero-variance initial state.
    pub fn scalar(a: f64, b: f64, c: f64, n: f64) -> Self {
        Self {
            a: Matrix::from_diag(&[a]),
            b: Matrix::from_diag(&[b]),
            c: Matrix::from_diag(&[c]),
            n: Matrix::from_diag(&[n]),
            x0_mean: vec![0.0],
            x0_cov: Matrix::zeros(1, 1),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.rows()
    }

    pub fn check_shapes(&self) -> Result<(), SourceError> {
        let m = self.a.rows();
        let shape = |what: &str, got: (usize, usize), want: String| {
            Err(SourceError::Shape(format!("{what} is {}x{}, expected {want}", got.0, got.1)))
        };
        if m == 0 || !self.a.is_square() {
            return shape("A", self.a.shape(), "non-empty square".into());
        }
        if self.b.rows() != m || self.b.cols() == 0 {
            return shape("B", self.b.shape(), format!("{m}xk"));
        }
        if self.c.cols() != m || self.c.rows() == 0 {
            return shape("C", self.c.shape(), format!("px{m}"));
        }
        let p = self.c.rows();
        if self.n.rows() != p || self.n.cols() == 0 {
            return shape("N", self.n.shape(), format!("{p}xd"));
        }
        if self.x0_mean.len() != m {
            return Err(SourceError::Shape(format!(
                "x0_mean has {} entries, expected {m}",
                self.x0_mean.len()
            )));
        }
        if self.x0_cov.shape() != (m, m) {
            return shape("x0_cov", self.x0_cov.shape(), format!("{m}x{m}"));
        }
        Ok(())
    }

    /// `BBᵀ`.
    pub fn process_cov(&self) -> Matrix {
        self.b.congruence(&Matrix::identity(self.b.cols()))
    }

    /// `NNᵀ`.
    pub fn obs_noise_cov(&self) -> Matrix {
        self.n.congruence(&Matrix::identity(self.n.cols()))
    }

    /// Checks detectability of `(C, A)`, stabilizability of `(A, B)`,
    /// positive definiteness of `NNᵀ` and PSD of the initial covariance.
    ///
    /// Rank deficiency is located through the unobservable subspace
    /// (null space of the observability matrix), which is `A`-invariant;
    /// the pair is detectable iff `A` restricted to it is Schur stable.
    /// This is equivalent to a PBH test over every eigenvalue with `|λ| ≥ 1`.
    pub fn validate(&self) -> Result<ValidationReport, SourceError> {
        self.check_shapes()?;
        let detectability = detectability(&self.a, &self.c)?;
        let stabilizability = detectability_of_dual(&self.a, &self.b)?;
        let nn = self.obs_noise_cov();
        let noise_eig = sym_eig(&nn, 1e-12)?;
        let noise_cov_min_eig = *noise_eig.values.last().unwrap_or(&0.0);
        let noise_cov_pd = noise_cov_min_eig > RANK_REL_TOL * noise_eig.values[0].abs().max(f64::MIN_POSITIVE);
        let x0_cov_psd = is_psd(&self.x0_cov, 1e-10)?;
        Ok(ValidationReport {
            detectability,
            stabilizability,
            noise_cov_min_eig,
            noise_cov_pd,
            x0_cov_psd,
            spectral_radius_a: spectral_radius(&self.a),
        })
    }

    /// Samples `T` steps of state and observation.
    pub fn simulate(&self, steps: usize, rng: &mut SimRng) -> Result<(Vec<Vector>, Vec<Vector>), SourceError> {
        self.check_shapes()?;
        let x0_sqrt = psd_sqrt(&self.x0_cov)?;
        let mut x = gaussian_sample(rng, &self.x0_mean, &x0_sqrt)?;
        let p = self.obs_dim();
        let m = self.state_dim();
        let mut states = Vec::with_capacity(steps);
        let mut observations = Vec::with_capacity(steps);
        for _ in 0..steps {
            let y = gaussian_sample(rng, &self.c.matvec(&x), &self.n)?;
            debug_assert_eq!(y.len(), p);
            let next = gaussian_sample(rng, &self.a.matvec(&x), &self.b)?;
            debug_assert_eq!(next.len(), m);
            states.push(std::mem::replace(&mut x, next));
            observations.push(y);
        }
        Ok((states, observations))
    }
}

/// Symmetric square root of a PSD matrix (negative rounding noise clipped).
pub fn psd_sqrt(s: &Matrix) -> Result<Matrix, NumericsError> {
    let eig = sym_eig(s, 1e-10)?;
    let n = s.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &l) in eig.values.iter().enumerate() {
        let r = l.max(0.0).sqrt();
        if r == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += r * eig.vectors[(i, k)] * eig.vectors[(j, k)];
            }
        }
    }
    Ok(out)
}

fn detectability(a: &Matrix, c: &Matrix) -> Result<SubspaceCheck, NumericsError> {
    let m = a.rows();
    let mut obs = c.clone();
    let mut block = c.clone();
    for _ in 1..m {
        block = &block * a;
        obs = obs.vstack(&block);
    }
    let basis = null_space(&obs, RANK_REL_TOL)?;
    let k = basis.cols();
    if k == 0 {
        return Ok(SubspaceCheck {
            deficient_dim: 0,
            restricted_radius: 0.0,
            passes: true,
        });
    }
    let restricted = &(&basis.transpose() * a) * &basis;
    let radius = spectral_radius(&restricted);
    Ok(SubspaceCheck {
        deficient_dim: k,
        restricted_radius: radius,
        passes: radius < 1.0,
    })
}

// (A, B) stabilizable ⇔ (Bᵀ, Aᵀ) detectable.
fn detectability_of_dual(a: &Matrix, b: &Matrix) -> Result<SubspaceCheck, NumericsError> {
    detectability(&a.transpose(), &b.transpose())
}

/// Stationary first-order Markov source over a finite alphabet with a
/// single-letter distortion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSource {
    x_card: usize,
    y_card: usize,
    horizon: usize,
    initial: Vector,
    transition: Matrix,
    distortion: Matrix,
}

impl FiniteSource {
    /// `horizon` is the number of letters `n + 1`.
    pub fn new(initial: Vector, transition: Matrix, distortion: Matrix, horizon: usize) -> Result<Self, SourceError> {
        let x_card = initial.len();
        if x_card == 0 {
            return Err(SourceError::Shape("empty source alphabet".into()));
        }
        if horizon == 0 {
            return Err(SourceError::Shape("horizon must be at least 1".into()));
        }
        if transition.shape() != (x_card, x_card) {
            return Err(SourceError::Shape(format!(
                "transition is {}x{}, expected {x_card}x{x_card}",
                transition.rows(),
                transition.cols()
            )));
        }
        if distortion.rows() != x_card || distortion.cols() == 0 {
            return Err(SourceError::Shape(format!(
                "distortion is {}x{}, expected {x_card}x|Y|",
                distortion.rows(),
                distortion.cols()
            )));
        }
        check_pmf(&initial, "initial pmf")?;
        for (i, row) in transition.to_rows().iter().enumerate() {
            check_pmf(row, &format!("transition row {i}"))?;
        }
        if let Some(bad) = distortion.as_slice().iter().find(|v| **v < 0.0) {
            return Err(SourceError::Distribution(format!("negative distortion {bad}")));
        }
        Ok(Self {
            x_card,
            y_card: distortion.cols(),
            horizon,
            initial,
            transition,
            distortion,
        })
    }

    /// Independent, identically distributed letters.
    pub fn iid(pmf: Vector, distortion: Matrix, horizon: usize) -> Result<Self, SourceError> {
        let k = pmf.len();
        let rows: Vec<Vec<f64>> = (0..k).map(|_| pmf.clone()).collect();
        Self::new(pmf, Matrix::from_rows(&rows)?, distortion, horizon)
    }

    /// `|𝒳| × |𝒳|` Hamming distortion (`|𝒴| = |𝒳|`).
    pub fn hamming(k: usize) -> Matrix {
        let mut d = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    d[(i, j)] = 1.0;
                }
            }
        }
        d
    }

    pub fn x_card(&self) -> usize {
        self.x_card
    }
    pub fn y_card(&self) -> usize {
        self.y_card
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }
    pub fn transition(&self) -> &Matrix {
        &self.transition
    }
    pub fn distortion(&self) -> &Matrix {
        &self.distortion
    }

    pub fn rho(&self, x: usize, y: usize) -> f64 {
        self.distortion[(x, y)]
    }

    /// Law of `X_i`: `initial · transition^i`.
    pub fn marginal(&self, i: usize) -> Vector {
        let mut p = self.initial.clone();
        for _ in 0..i {
            p = (0..self.x_card)
                .map(|x1| (0..self.x_card).map(|x0| p[x0] * self.transition[(x0, x1)]).sum())
                .collect();
        }
        p
    }

    /// All source paths `x^i` (length `i + 1`) in lexicographic order with
    /// their probabilities, zero-probability paths included.
    pub fn enumerate_paths(&self, i: usize) -> Result<Vec<(Vec<usize>, f64)>, SourceError> {
        self.enumerate_paths_capped(i, DEFAULT_PATH_CAP)
    }

    pub fn enumerate_paths_capped(&self, i: usize, cap: usize) -> Result<Vec<(Vec<usize>, f64)>, SourceError> {
        if i >= self.horizon {
            return Err(SourceError::Shape(format!("stage {i} beyond horizon {}", self.horizon)));
        }
        let count = checked_pow(self.x_card, i + 1).filter(|&c| c <= cap).ok_or(SourceError::TooLarge {
            count: checked_pow(self.x_card, i + 1).unwrap_or(usize::MAX),
            cap,
        })?;
        Ok((0..count)
            .map(|idx| {
                let path = decode_path(idx, self.x_card, i + 1);
                let prob = self.path_probability(&path);
                (path, prob)
            })
            .collect())
    }

    pub fn path_probability(&self, path: &[usize]) -> f64 {
        let mut p = self.initial[path[0]];
        for w in path.windows(2) {
            p *= self.transition[(w[0], w[1])];
        }
        p
    }

    /// Per-letter distortion attainable with unlimited rate:
    /// `(1/(n+1)) Σ_i E[min_y ρ(X_i, y)]`.
    pub fn min_distortion(&self) -> f64 {
        let per_x: Vec<f64> = (0..self.x_card)
            .map(|x| (0..self.y_card).map(|y| self.rho(x, y)).fold(f64::INFINITY, f64::min))
            .collect();
        (0..self.horizon)
            .map(|i| self.marginal(i).iter().zip(&per_x).map(|(p, d)| p * d).sum::<f64>())
            .sum::<f64>()
            / self.horizon as f64
    }

    /// Per-letter distortion at zero rate, where each `Y_i` is the best
    /// constant: `(1/(n+1)) Σ_i min_y E[ρ(X_i, y)]`.
    pub fn zero_rate_distortion(&self) -> f64 {
        (0..self.horizon)
            .map(|i| {
                let p = self.marginal(i);
                (0..self.y_card)
                    .map(|y| (0..self.x_card).map(|x| p[x] * self.rho(x, y)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / self.horizon as f64
    }
}

fn check_pmf(p: &[f64], what: &str) -> Result<(), SourceError> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(SourceError::Distribution(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PMF_TOL {
        return Err(SourceError::Distribution(format!("{what} sums to {sum}")));
    }
    Ok(())
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

/// Lexicographic index → symbol sequence (first symbol most significant).
pub(crate) fn decode_path(mut idx: usize, card: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % card;
        idx /= card;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_scalar_passes() {
        let s = GaussMarkovSource::scalar(0.9, 1.0, 1.0, 0.1);
        let r = s.validate().unwrap();
        assert!(r.passes());
        assert_eq!(r.detectability.deficient_dim, 0);
    }

    #[test]
    fn unobserved_unstable_mode_fails() {
        let s = GaussMarkovSource::scalar(1.2, 1.0, 0.0, 1.0);
        let r = s.validate().unwrap();
        assert!(!r.detectability.passes);
        assert_eq!(r.detectability.deficient_dim, 1);
        assert!((r.detectability.restricted_radius - 1.2).abs() < 1e-9);
        assert!(!r.passes());
    }

    #[test]
    fn observed_unstable_mode_passes() {
        // [A − 1.2I; C] = [0; 1] has full column rank 1.
        let s = GaussMarkovSource::scalar(1.2, 1.0, 1.0, 0.1);
        assert!(s.validate().unwrap().passes());
    }

    #[test]
    fn unobserved_stable_mode_is_detectable() {
        let a = Matrix::from_diag(&[0.5, 1.1]);
        let c = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let s = GaussMarkovSource::new(
            a,
            Matrix::identity(2),
            c,
            Matrix::from_diag(&[1.0]),
            vec![0.0, 0.0],
            Matrix::identity(2),
        )
        .unwrap();
        let r = s.validate().unwrap();
        assert!(r.detectability.passes);
        assert_eq!(r.detectability.deficient_dim, 1);
    }

    #[test]
    fn unstabilizable_and_singular_noise() {
        let mut s = GaussMarkovSource::scalar(1.5, 0.0, 1.0, 0.0);
        s.b = Matrix::zeros(1, 1);
        let r = s.validate().unwrap();
        assert!(!r.stabilizability.passes);
        assert!(!r.noise_cov_pd);
    }

    #[test]
    fn shape_errors() {
        let r = GaussMarkovSource::new(
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::identity(3),
            Matrix::identity(3),
            vec![0.0; 2],
            Matrix::identity(2),
        );
        assert!(matches!(r, Err(SourceError::Shape(_))));
    }

    #[test]
    fn noiseless_trajectory() {
        let mut s = GaussMarkovSource::scalar(0.5, 0.0, 1.0, 0.0);
        s.x0_mean = vec![8.0];
        let mut rng = SimRng::seed_from_u64(1);
        let (xs, ys) = s.simulate(5, &mut rng).unwrap();
        assert_eq!(xs.iter().map(|x| x[0]).collect::<Vec<_>>(), vec![8.0, 4.0, 2.0, 1.0, 0.5]);
        assert_eq!(xs, ys);
    }

    #[test]
    fn simulation_is_reproducible() {
        let s = GaussMarkovSource::scalar(0.9, 1.0, 1.0, 0.1);
        let a = s.simulate(50, &mut SimRng::seed_from_u64(9)).unwrap();
        let b = s.simulate(50, &mut SimRng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iid_paths_uniform() {
        let src = FiniteSource::iid(vec![0.5, 0.5], FiniteSource::hamming(2), 2).unwrap();
        let paths = src.enumerate_paths(1).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(paths.iter().all(|(_, p)| (*p - 0.25).abs() < 1e-15));
        assert_eq!(paths[2].0, vec![1, 0]);
    }

    #[test]
    fn frozen_chain_paths() {
        let src = FiniteSource::new(vec![0.5, 0.5], Matrix::identity(2), FiniteSource::hamming(2), 2).unwrap();
        let probs: Vec<f64> = src.enumerate_paths(1).unwrap().into_iter().map(|(_, p)| p).collect();
        assert_eq!(probs, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn markov_paths_by_multiplication() {
        let t = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let src = FiniteSource::new(vec![1.0, 0.0], t, FiniteSource::hamming(2), 2).unwrap();
        let paths = src.enumerate_paths(1).unwrap();
        assert!((paths[0].1 - 0.9).abs() < 1e-15);
        assert!((paths[1].1 - 0.1).abs() < 1e-15);
        assert_eq!(paths[2].1 + paths[3].1, 0.0);
    }

    #[test]
    fn path_cap_and_bad_pmf() {
        let src = FiniteSource::iid(vec![0.5, 0.5], FiniteSource::hamming(2), 30).unwrap();
        assert!(matches!(src.enumerate_paths(20), Err(SourceError::TooLarge { .. })));
        assert!(matches!(
            FiniteSource::iid(vec![0.6, 0.6], FiniteSource::hamming(2), 1),
            Err(SourceError::Distribution(_))
        ));
    }

    #[test]
    fn zero_rate_and_min_distortion() {
        let src = FiniteSource::iid(vec![0.7, 0.3], FiniteSource::hamming(2), 3).unwrap();
        assert!((src.zero_rate_distortion() - 0.3).abs() < 1e-15);
        assert_eq!(src.min_distortion(), 0.0);
    }
}
