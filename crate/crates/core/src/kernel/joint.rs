use serde::Serialize;

use super::tables::ZERO_PROB;
use super::{pow, xlogy_ratio, CausalKernel, KernelError};
use crate::source_model::{decode_path, FiniteSource, DEFAULT_PATH_CAP};

/// Joint law of `(X^n, Y^n)` laid out `[x path][y path]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointLaw {
    x_card: usize,
    y_card: usize,
    horizon: usize,
    x_paths: usize,
    y_paths: usize,
    probs: Vec<f64>,
}

impl JointLaw {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.y_paths + y]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        self.probs.chunks(self.y_paths).map(|row| row.iter().sum()).collect()
    }

    pub fn y_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.y_paths];
        for row in self.probs.chunks(self.y_paths) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// `Σ P ln[P / (P_X P_Y)]` in nats.
    pub fn mutual_information(&self) -> f64 {
        let px = self.x_marginal();
        let py = self.y_marginal();
        let mut total = 0.0;
        for (x, row) in self.probs.chunks(self.y_paths).enumerate() {
            for (y, &p) in row.iter().enumerate() {
                total += xlogy_ratio(p, px[x] * py[y]);
            }
        }
        total.max(0.0)
    }

    /// `E Σ_i ρ(X_i, Y_i)`.
    pub fn total_distortion(&self, source: &FiniteSource) -> f64 {
        let mut total = 0.0;
        for x in 0..self.x_paths {
            let xs = decode_path(x, self.x_card, self.horizon);
            for y in 0..self.y_paths {
                let p = self.prob(x, y);
                if p > 0.0 {
                    let ys = decode_path(y, self.y_card, self.horizon);
                    total += p * xs.iter().zip(&ys).map(|(&a, &b)| source.rho(a, b)).sum::<f64>();
                }
            }
        }
        total
    }

    /// `P* + ε (P − P*)` with `self = P*`.
    pub fn interpolate(&self, other: &Self, eps: f64) -> Self {
        let mut out = self.clone();
        for (o, (a, b)) in out.probs.iter_mut().zip(self.probs.iter().zip(&other.probs)) {
            *o = a + eps * (b - a);
        }
        out
    }

    /// Marginal of `(X^{xlen−1}, Y^{ylen−1})`, laid out `[x prefix][y prefix]`.
    pub fn prefix_marginal(&self, xlen: usize, ylen: usize) -> Vec<f64> {
        let xdiv = self.x_card.pow((self.horizon - xlen) as u32);
        let ydiv = self.y_card.pow((self.horizon - ylen) as u32);
        let ycount = self.y_card.pow(ylen as u32);
        let mut out = vec![0.0; self.x_card.pow(xlen as u32) * ycount];
        for x in 0..self.x_paths {
            for y in 0..self.y_paths {
                out[(x / xdiv) * ycount + y / ydiv] += self.prob(x, y);
            }
        }
        out
    }
}

fn check_dims(source: &FiniteSource, kernel: &CausalKernel) -> Result<(), KernelError> {
    if (kernel.x_card(), kernel.y_card(), kernel.horizon()) != (source.x_card(), source.y_card(), source.horizon()) {
        return Err(KernelError::Shape(format!(
            "kernel is |X|={} |Y|={} n+1={}, source is |X|={} |Y|={} n+1={}",
            kernel.x_card(),
            kernel.y_card(),
            kernel.horizon(),
            source.x_card(),
            source.y_card(),
            source.horizon()
        )));
    }
    Ok(())
}

/// Joint law from stagewise conditionals `q(i, y^{i−1}, x^n, y_i)` that may
/// look at the whole source sequence. Used to build anticipative kernels.
pub fn induced_joint_general<F>(source: &FiniteSource, mut q: F) -> Result<JointLaw, KernelError>
where
    F: FnMut(usize, &[usize], &[usize], usize) -> f64,
{
    let (xc, yc, h) = (source.x_card(), source.y_card(), source.horizon());
    let (x_paths, y_paths) = (pow(xc, h)?, pow(yc, h)?);
    let count = x_paths.checked_mul(y_paths).filter(|&c| c <= DEFAULT_PATH_CAP).ok_or(KernelError::TooLarge {
        what: "joint law",
        count: x_paths.saturating_mul(y_paths),
        cap: DEFAULT_PATH_CAP,
    })?;
    let mut probs = vec![0.0; count];
    for x in 0..x_paths {
        let xs = decode_path(x, xc, h);
        let mu = source.path_probability(&xs);
        if mu == 0.0 {
            continue;
        }
        for y in 0..y_paths {
            let ys = decode_path(y, yc, h);
            let mut p = mu;
            for i in 0..h {
                p *= q(i, &ys[..i], &xs, ys[i]);
            }
            probs[x * y_paths + y] = p;
        }
    }
    Ok(JointLaw {
        x_card: xc,
        y_card: yc,
        horizon: h,
        x_paths,
        y_paths,
        probs,
    })
}

/// `P(x^n, y^n) = μ(x^n) Π_i q_i(y_i | y^{i−1}, x^i)`.
pub fn induced_joint(source: &FiniteSource, kernel: &CausalKernel) -> Result<JointLaw, KernelError> {
    check_dims(source, kernel)?;
    let (xc, yc) = (source.x_card(), source.y_card());
    induced_joint_general(source, |i, yh, xs, y| {
        kernel.slice(i, super::encode(yh, yc), super::encode(&xs[..=i], xc))[y]
    })
}

/// `I(X^n; Y^n)` in nats (total over the horizon).
pub fn mutual_information(source: &FiniteSource, kernel: &CausalKernel) -> Result<f64, KernelError> {
    Ok(induced_joint(source, kernel)?.mutual_information())
}

/// `E Σ_i ρ(X_i, Y_i)`.
pub fn total_distortion(source: &FiniteSource, kernel: &CausalKernel) -> Result<f64, KernelError> {
    Ok(induced_joint(source, kernel)?.total_distortion(source))
}

/// Per-letter average distortion `(1/(n+1)) E Σ_i ρ(X_i, Y_i)`.
pub fn average_distortion(source: &FiniteSource, kernel: &CausalKernel) -> Result<f64, KernelError> {
    Ok(total_distortion(source, kernel)? / source.horizon() as f64)
}

/// Directional derivative of `I` at `q*` towards `q`:
/// `Σ μ(x^n) (q − q*)(y^n|x^n) ln[q*(y^n|x^n) / ν*(y^n)]`.
pub fn gateaux_derivative(source: &FiniteSource, q_star: &CausalKernel, q: &CausalKernel) -> Result<f64, KernelError> {
    check_dims(source, q)?;
    let joint = induced_joint(source, q_star)?;
    let nu = joint.y_marginal();
    let (xc, yc, h) = (source.x_card(), source.y_card(), source.horizon());
    let mut total = 0.0;
    for x in 0..joint.x_paths {
        let xs = decode_path(x, xc, h);
        let mu = source.path_probability(&xs);
        if mu == 0.0 {
            continue;
        }
        for (y, &nu_y) in nu.iter().enumerate() {
            let ys = decode_path(y, yc, h);
            let (a, b) = (q_star.sequence_prob(&xs, &ys), q.sequence_prob(&xs, &ys));
            if a <= ZERO_PROB {
                if b > ZERO_PROB {
                    return Err(KernelError::Domain(format!(
                        "direction puts mass {b:e} on x={xs:?} y={ys:?} where q* vanishes"
                    )));
                }
                continue;
            }
            total += mu * (b - a) * (a / nu_y).ln();
        }
    }
    Ok(total)
}

/// Largest violations of the two conditional-independence conditions that
/// characterize a nonanticipative kernel:
/// (2) `Y_i ⟂ X_{i+1..n} | X^i, Y^{i−1}` and (3) `Y^i ⟂ X_{i+1} | X^i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovReport {
    /// Per stage `i = 0..=n`.
    pub future_independence: Vec<f64>,
    /// Per stage `i = 0..n` (there is no `X_{n+1}`).
    pub next_symbol_independence: Vec<f64>,
}

impl MarkovReport {
    pub fn max_future_violation(&self) -> f64 {
        self.future_independence.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_next_symbol_violation(&self) -> f64 {
        self.next_symbol_independence.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_future_violation() < tol && self.max_next_symbol_violation() < tol
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > ZERO_PROB).then(|| num / den)
}

/// Evaluates both conditions on a joint law as maximal absolute
/// differences between conditional probabilities.
pub fn check_markov_conditions(joint: &JointLaw) -> MarkovReport {
    let (xc, yc, h) = (joint.x_card, joint.y_card, joint.horizon);
    let mut future = Vec::with_capacity(h);
    let mut next = Vec::with_capacity(h.saturating_sub(1));
    for i in 0..h {
        // P(y_i | x^n, y^{i−1}) against P(y_i | x^i, y^{i−1}).
        let full_num = joint.prefix_marginal(h, i + 1);
        let full_den = joint.prefix_marginal(h, i);
        let part_num = joint.prefix_marginal(i + 1, i + 1);
        let part_den = joint.prefix_marginal(i + 1, i);
        let (yi, yprev) = (yc.pow(i as u32 + 1), yc.pow(i as u32));
        let xdiv = xc.pow((h - i - 1) as u32);
        let mut worst: f64 = 0.0;
        for x in 0..joint.x_paths {
            let xp = x / xdiv;
            for y in 0..yi {
                let a = ratio(full_num[x * yi + y], full_den[x * yprev + y / yc]);
                let b = ratio(part_num[xp * yi + y], part_den[xp * yprev + y / yc]);
                if let (Some(a), Some(b)) = (a, b) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        future.push(worst);

        if i + 1 < h {
            // P(x_{i+1} | x^i, y^i) against P(x_{i+1} | x^i).
            let with_y = joint.prefix_marginal(i + 2, i + 1);
            let x_only = joint.prefix_marginal(i + 2, 0);
            let xi_only = joint.prefix_marginal(i + 1, 0);
            let mut worst: f64 = 0.0;
            for xn in 0..xc.pow(i as u32 + 2) {
                let xp = xn / xc;
                let b = ratio(x_only[xn], xi_only[xp]);
                for y in 0..yi {
                    let a = ratio(with_y[xn * yi + y], part_num[xp * yi + y]);
                    if let (Some(a), Some(b)) = (a, b) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
            next.push(worst);
        }
    }
    MarkovReport {
        future_independence: future,
        next_symbol_independence: next,
    }
}

pub fn check_markov_equivalence(source: &FiniteSource, kernel: &CausalKernel) -> Result<MarkovReport, KernelError> {
    Ok(check_markov_conditions(&induced_joint(source, kernel)?))
}
