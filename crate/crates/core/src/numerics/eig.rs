//! Symmetric eigendecomposition by cyclic Jacobi rotations, plus the helpers
//! built on it (PSD test, pseudo-inverse, null space, spectral radius).

use super::{Matrix, NumericsError, Vector};

pub const DEFAULT_EIG_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;

/// Eigenvectors (columns of `vectors`) and eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub vectors: Matrix,
    pub values: Vector,
}

fn check_symmetric(s: &Matrix, tol: f64) -> Result<(), NumericsError> {
    if !s.is_square() {
        return Err(NumericsError::Shape(format!(
            "expected square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if s.rows() == 0 {
        return Err(NumericsError::Shape("empty matrix".into()));
    }
    let scale = s.max_abs();
    let asym = s.asymmetry();
    if asym > tol * scale.max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(NumericsError::NotSymmetric { asymmetry: asym, scale });
    }
    Ok(())
}

/// Decomposes a symmetric matrix as `S = E·diag(λ)·Eᵀ`.
///
/// Eigenvalues come back in descending order. Each eigenvector is signed so
/// its largest-magnitude entry is positive (first such entry on ties), which
/// makes `E` reproducible for a given input.
pub fn sym_eig(s: &Matrix, tol: f64) -> Result<SymEig, NumericsError> {
    check_symmetric(s, tol)?;
    let n = s.rows();
    let mut a = s.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = a.max_abs();

    if scale > 0.0 {
        let threshold = tol * scale;
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let off = off_diagonal_max(&a);
            // Rotations below this level perturb entries by less than an ulp of `scale`.
            if off <= threshold * 1e-3 || off <= f64::EPSILON * scale {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
        if !converged {
            let off = off_diagonal_max(&a);
            if off > threshold {
                return Err(NumericsError::NoConvergence {
                    what: "jacobi eigensolver",
                    iterations: MAX_SWEEPS,
                    residual: off,
                });
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values: Vector = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.col(src);
        let lead = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &x)| {
                if x.abs() > bv.abs() + 1e-14 {
                    (i, x)
                } else {
                    (bi, bv)
                }
            })
            .0;
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for (i, x) in col.iter().enumerate() {
            vectors[(i, dst)] = sign * x;
        }
    }
    Ok(SymEig { vectors, values })
}

fn off_diagonal_max(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

// One Jacobi rotation annihilating a[p][q] (Rutishauser's formulation).
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// True iff every eigenvalue of the symmetric matrix is at least `-tol`.
pub fn is_psd(s: &Matrix, tol: f64) -> Result<bool, NumericsError> {
    let eig = sym_eig(s, tol)?;
    Ok(eig.values.iter().all(|&l| l >= -tol))
}

/// Moore–Penrose inverse of a symmetric PSD matrix. Eigenvalues at or below
/// `rel_tol · λ_max` are treated as zero.
pub fn sym_pinv(s: &Matrix, rel_tol: f64) -> Result<Matrix, NumericsError> {
    let eig = sym_eig(s, DEFAULT_EIG_TOL)?;
    let n = s.rows();
    let top = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Matrix::zeros(n, n);
    if top == 0.0 {
        return Ok(out);
    }
    for (k, &l) in eig.values.iter().enumerate() {
        if l.abs() <= rel_tol * top {
            continue;
        }
        let inv = 1.0 / l;
        for i in 0..n {
            let vi = eig.vectors[(i, k)] * inv;
            for j in 0..n {
                out[(i, j)] += vi * eig.vectors[(j, k)];
            }
        }
    }
    Ok(out.symmetrized())
}

/// Orthonormal basis (as columns) of the right null space of `m`, using the
/// singular-value threshold `rel_tol · σ_max`.
pub fn null_space(m: &Matrix, rel_tol: f64) -> Result<Matrix, NumericsError> {
    let gram = &m.transpose() * m;
    let n = gram.rows();
    let eig = sym_eig(&gram, DEFAULT_EIG_TOL)?;
    let sigma: Vec<f64> = eig.values.iter().map(|l| l.max(0.0).sqrt()).collect();
    let top = sigma.first().copied().unwrap_or(0.0);
    let null: Vec<usize> = (0..n).filter(|&k| sigma[k] <= rel_tol * top || top == 0.0).collect();
    let mut basis = Matrix::zeros(n, null.len());
    for (dst, &k) in null.iter().enumerate() {
        for i in 0..n {
            basis[(i, dst)] = eig.vectors[(i, k)];
        }
    }
    Ok(basis)
}

/// Spectral radius of a general square matrix by the Gelfand limit
/// `ρ(A) = lim ‖A^k‖^{1/k}`, evaluated with repeated squaring and
/// log-domain renormalization (`k = 2^64` effectively).
pub fn spectral_radius(a: &Matrix) -> f64 {
    assert!(a.is_square());
    if a.rows() == 0 {
        return 0.0;
    }
    let mut m = a.clone();
    let mut log_scale = 0.0f64;
    let mut k = 1.0f64;
    let mut estimate = a.max_abs();
    for _ in 0..64 {
        let norm = m.max_abs();
        if norm == 0.0 {
            return 0.0;
        }
        m = m.scale(1.0 / norm);
        log_scale += norm.ln() / k;
        estimate = log_scale.exp();
        m = &m * &m;
        k *= 2.0;
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identity_and_diagonal_cases() {
        let e = sym_eig(&Matrix::identity(2), 1e-12).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert!(e.vectors.max_abs_diff(&Matrix::identity(2)) < 1e-15);

        let e = sym_eig(&Matrix::from_diag(&[3.0, 1.0]), 1e-12).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!(e.vectors.max_abs_diff(&Matrix::identity(2)) < 1e-15);

        // Ascending diagonal gets reordered with columns permuted.
        let e = sym_eig(&Matrix::from_diag(&[1.0, 3.0]), 1e-12).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors[(1, 0)], 1.0);
    }

    #[test]
    fn two_by_two_hand_case() {
        // λ² − 4λ + 3 = 0 → λ ∈ {3, 1}.
        let e = sym_eig(&m(&[&[2.0, 1.0], &[1.0, 2.0]]), 1e-12).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)].abs() - r).abs() < 1e-12);
        assert!((e.vectors[(1, 0)] - e.vectors[(0, 0)]).abs() < 1e-12);
        assert!((e.vectors[(1, 1)] + e.vectors[(0, 1)]).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_symmetric() {
        let err = sym_eig(&m(&[&[1.0, 2.0], &[0.0, 1.0]]), 1e-12).unwrap_err();
        assert!(matches!(err, NumericsError::NotSymmetric { .. }));
        assert!(sym_eig(&Matrix::zeros(2, 3), 1e-12).is_err());
    }

    #[test]
    fn psd_examples() {
        assert!(is_psd(&Matrix::identity(3), 1e-12).unwrap());
        assert!(is_psd(&Matrix::from_diag(&[1.0, 0.0]), 1e-12).unwrap());
        // Eigenvalues 3 and −1.
        assert!(!is_psd(&m(&[&[1.0, 2.0], &[2.0, 1.0]]), 1e-12).unwrap());
        assert!(is_psd(&m(&[&[1.0, 2.0], &[0.0, 1.0]]), 1e-12).is_err());
    }

    #[test]
    fn pinv_of_rank_one() {
        let s = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let p = sym_pinv(&s, 1e-12).unwrap();
        // pinv of 2·uuᵀ (u unit) is uuᵀ/2.
        assert!(p.max_abs_diff(&s.scale(0.25)) < 1e-14);
    }

    #[test]
    fn null_space_and_radius() {
        let a = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let ns = null_space(&a, 1e-9).unwrap();
        assert_eq!(ns.cols(), 1);
        assert!((ns[(1, 0)].abs() - 1.0).abs() < 1e-14);

        let rot = m(&[&[0.0, -0.5], &[0.5, 0.0]]);
        assert!((spectral_radius(&rot) - 0.5).abs() < 1e-12);
        let jordan = m(&[&[0.9, 1.0], &[0.0, 0.9]]);
        assert!((spectral_radius(&jordan) - 0.9).abs() < 1e-9);
        assert_eq!(spectral_radius(&Matrix::zeros(2, 2)), 0.0);
    }
}
