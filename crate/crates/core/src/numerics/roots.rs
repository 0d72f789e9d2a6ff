use super::NumericsError;

pub const DEFAULT_BISECT_TOL: f64 = 1e-12;
pub const DEFAULT_BISECT_ITERS: usize = 200;

/// Finds a root of a monotone function on `[lo, hi]` by bisection.
///
/// Stops when `|f(x)| ≤ tol` or the bracket is narrower than `tol`.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(NumericsError::Bracket(format!("lo ({lo}) must be below hi ({hi})")));
    }
    let (mut a, mut b) = (lo, hi);
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::Bracket(format!(
            "f({lo}) = {fa} and f({hi}) = {fb} have the same sign"
        )));
    }
    let rising = fb > 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm.abs() <= tol || (b - a) <= tol {
            return Ok(mid);
        }
        if (fm > 0.0) == rising {
            b = mid;
        } else {
            a = mid;
        }
    }
    Err(NumericsError::NoConvergence {
        what: "bisection",
        iterations: max_iter,
        residual: b - a,
    })
}
