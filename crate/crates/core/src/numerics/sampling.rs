use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, NumericsError, Vector};

/// Seeded generator for all Monte Carlo draws.
///
/// Uniforms come from ChaCha8 (a counter-based stream cipher, portable and
/// bit-reproducible across platforms); normals are produced by the
/// Box–Muller transform, caching the second variate of each pair.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SimRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.gen();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2: f64 = self.inner.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn standard_normal_vec(&mut self, n: usize) -> Vector {
        (0..n).map(|_| self.standard_normal()).collect()
    }
}

/// Draws `mean + cov_sqrt · ζ` with `ζ` standard normal of length `cov_sqrt.cols()`.
pub fn gaussian_sample(rng: &mut SimRng, mean: &[f64], cov_sqrt: &Matrix) -> Result<Vector, NumericsError> {
    if cov_sqrt.rows() != mean.len() {
        return Err(NumericsError::Shape(format!(
            "cov_sqrt has {} rows but mean has {} entries",
            cov_sqrt.rows(),
            mean.len()
        )));
    }
    let zeta = rng.standard_normal_vec(cov_sqrt.cols());
    let noise = cov_sqrt.matvec(&zeta);
    Ok(mean.iter().zip(noise).map(|(m, n)| m + n).collect())
}
