use std::fmt::Write as _;

use serde::Serialize;

use super::{encode, pow, KernelError};
use crate::numerics::SimRng;
use crate::source_model::decode_path;

/// Upper bound on the number of entries in any kernel or joint table.
pub const KERNEL_ENTRY_CAP: usize = 10_000_000;
/// Probabilities at or below this are treated as zero.
pub(crate) const ZERO_PROB: f64 = 1e-300;
const SUM_TOL: f64 = 1e-12;

/// Stage tables `q_i(y_i | y^{i−1}, x^i)` laid out `[history][path][symbol]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalKernel {
    x_card: usize,
    y_card: usize,
    horizon: usize,
    stages: Vec<Vec<f64>>,
}

impl CausalKernel {
    /// Builds each conditional slice from `f(i, y^{i−1}, x^i)`.
    pub fn from_fn<F>(x_card: usize, y_card: usize, horizon: usize, mut f: F) -> Result<Self, KernelError>
    where
        F: FnMut(usize, &[usize], &[usize]) -> Vec<f64>,
    {
        if x_card == 0 || y_card == 0 || horizon == 0 {
            return Err(KernelError::Shape("alphabets and horizon must be non-empty".into()));
        }
        let mut stages = Vec::with_capacity(horizon);
        for i in 0..horizon {
            let (hists, paths) = (pow(y_card, i)?, pow(x_card, i + 1)?);
            let len = hists
                .checked_mul(paths)
                .and_then(|v| v.checked_mul(y_card))
                .filter(|&v| v <= KERNEL_ENTRY_CAP)
                .ok_or(KernelError::TooLarge {
                    what: "kernel stage",
                    count: hists.saturating_mul(paths).saturating_mul(y_card),
                    cap: KERNEL_ENTRY_CAP,
                })?;
            let mut table = Vec::with_capacity(len);
            for h in 0..hists {
                let yh = decode_path(h, y_card, i);
                for p in 0..paths {
                    let slice = f(i, &yh, &decode_path(p, x_card, i + 1));
                    if slice.len() != y_card {
                        return Err(KernelError::Shape(format!(
                            "stage {i} slice has {} entries, expected {y_card}",
                            slice.len()
                        )));
                    }
                    table.extend(slice);
                }
            }
            stages.push(table);
        }
        let k = Self {
            x_card,
            y_card,
            horizon,
            stages,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn uniform(x_card: usize, y_card: usize, horizon: usize) -> Result<Self, KernelError> {
        Self::from_fn(x_card, y_card, horizon, |_, _, _| vec![1.0 / y_card as f64; y_card])
    }

    /// Kernel that ignores the source: `q_i = ν_i`.
    pub fn from_output_law(law: &OutputLaw, x_card: usize) -> Result<Self, KernelError> {
        Self::from_fn(x_card, law.y_card, law.horizon, |i, yh, _| law.slice(i, encode(yh, law.y_card)).to_vec())
    }

    /// Every slice drawn uniformly from the probability simplex.
    pub fn random(x_card: usize, y_card: usize, horizon: usize, rng: &mut SimRng) -> Result<Self, KernelError> {
        Self::from_fn(x_card, y_card, horizon, |_, _, _| random_pmf(y_card, rng))
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        for (i, table) in self.stages.iter().enumerate() {
            for (k, slice) in table.chunks(self.y_card).enumerate() {
                check_slice(slice).map_err(|m| KernelError::Distribution(format!("stage {i} slice {k}: {m}")))?;
            }
        }
        Ok(())
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

    pub fn num_paths(&self, i: usize) -> usize {
        self.x_card.pow(i as u32 + 1)
    }

    pub fn num_histories(&self, i: usize) -> usize {
        self.y_card.pow(i as u32)
    }

    fn offset(&self, i: usize, hist: usize, path: usize) -> usize {
        (hist * self.num_paths(i) + path) * self.y_card
    }

    /// `q_i(· | y^{i−1}, x^i)` by lexicographic indices.
    pub fn slice(&self, i: usize, hist: usize, path: usize) -> &[f64] {
        let o = self.offset(i, hist, path);
        &self.stages[i][o..o + self.y_card]
    }

    /// `q_i(· | y^{i−1}, x^i)` by symbol sequences; the stage is `xpath.len() − 1`.
    pub fn conditional(&self, yhist: &[usize], xpath: &[usize]) -> &[f64] {
        let i = yhist.len();
        assert_eq!(xpath.len(), i + 1, "x path must be one letter longer than the y history");
        self.slice(i, encode(yhist, self.y_card), encode(xpath, self.x_card))
    }

    pub fn slice_mut(&mut self, i: usize, hist: usize, path: usize) -> &mut [f64] {
        let o = self.offset(i, hist, path);
        &mut self.stages[i][o..o + self.y_card]
    }

    pub fn stage(&self, i: usize) -> &[f64] {
        &self.stages[i]
    }

    /// `q(y^n | x^n) = Π_i q_i(y_i | y^{i−1}, x^i)`.
    pub fn sequence_prob(&self, xs: &[usize], ys: &[usize]) -> f64 {
        let mut p = 1.0;
        let (mut h, mut path) = (0, 0);
        for i in 0..self.horizon {
            path = path * self.x_card + xs[i];
            p *= self.slice(i, h, path)[ys[i]];
            h = h * self.y_card + ys[i];
        }
        p
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.stages
            .iter()
            .flatten()
            .zip(other.stages.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Plain-text table, one conditional slice per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for i in 0..self.horizon {
            let ys = if i == 0 { "()".to_string() } else { format!("(y_0..y_{})", i - 1) };
            let _ = writeln!(out, "# stage {i}: y = {ys}, x = (x_0..x_{i})");
            for h in 0..self.num_histories(i) {
                for p in 0..self.num_paths(i) {
                    let yh = decode_path(h, self.y_card, i);
                    let xp = decode_path(p, self.x_card, i + 1);
                    let probs: Vec<String> = self.slice(i, h, p).iter().map(|v| format!("{v:.11e}")).collect();
                    let _ = writeln!(out, "y={:?} x={:?} : {}", yh, xp, probs.join(" "));
                }
            }
        }
        out
    }
}

/// Output conditionals `ν_i(y_i | y^{i−1})` laid out `[history][symbol]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputLaw {
    y_card: usize,
    horizon: usize,
    stages: Vec<Vec<f64>>,
}

impl OutputLaw {
    pub fn uniform(y_card: usize, horizon: usize) -> Result<Self, KernelError> {
        if y_card == 0 || horizon == 0 {
            return Err(KernelError::Shape("alphabet and horizon must be non-empty".into()));
        }
        let stages = (0..horizon)
            .map(|i| Ok(vec![1.0 / y_card as f64; pow(y_card, i + 1)?]))
            .collect::<Result<_, KernelError>>()?;
        Ok(Self {
            y_card,
            horizon,
            stages,
        })
    }

    pub(crate) fn from_stages(y_card: usize, horizon: usize, stages: Vec<Vec<f64>>) -> Self {
        Self {
            y_card,
            horizon,
            stages,
        }
    }

    pub fn y_card(&self) -> usize {
        self.y_card
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn slice(&self, i: usize, hist: usize) -> &[f64] {
        &self.stages[i][hist * self.y_card..(hist + 1) * self.y_card]
    }

    pub fn stage(&self, i: usize) -> &[f64] {
        &self.stages[i]
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        for (i, table) in self.stages.iter().enumerate() {
            for (h, slice) in table.chunks(self.y_card).enumerate() {
                check_slice(slice).map_err(|m| KernelError::Distribution(format!("stage {i} history {h}: {m}")))?;
            }
        }
        Ok(())
    }

    /// `ν(y^n) = Π_i ν_i(y_i | y^{i−1})`.
    pub fn sequence_prob(&self, ys: &[usize]) -> f64 {
        let mut p = 1.0;
        let mut h = 0;
        for (i, &y) in ys.iter().enumerate() {
            p *= self.slice(i, h)[y];
            h = h * self.y_card + y;
        }
        p
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.stages
            .iter()
            .flatten()
            .zip(other.stages.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_slice(slice: &[f64]) -> Result<(), String> {
    if let Some(v) = slice.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(format!("entry {v} is negative or non-finite"));
    }
    let sum: f64 = slice.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

/// Uniform draw from the simplex (normalized exponentials).
pub(crate) fn random_pmf(k: usize, rng: &mut SimRng) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.uniform_open().ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_sequence_prob() {
        let k = CausalKernel::from_fn(2, 2, 2, |i, yh, xp| {
            let bias = 0.1 + 0.2 * xp[i] as f64 + 0.05 * yh.iter().sum::<usize>() as f64;
            vec![bias, 1.0 - bias]
        })
        .unwrap();
        assert_eq!(k.stage(0).len(), 4);
        assert_eq!(k.stage(1).len(), 2 * 4 * 2);
        let p = k.sequence_prob(&[1, 0], &[1, 0]);
        assert!((p - 0.7 * 0.15).abs() < 1e-15);
        let total: f64 = (0..4).map(|y| k.sequence_prob(&[1, 0], &decode_path(y, 2, 2))).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_slices() {
        assert!(matches!(
            CausalKernel::from_fn(2, 2, 1, |_, _, _| vec![0.5, 0.6]),
            Err(KernelError::Distribution(_))
        ));
        assert!(matches!(
            CausalKernel::from_fn(2, 2, 1, |_, _, _| vec![1.0]),
            Err(KernelError::Shape(_))
        ));
    }

    #[test]
    fn random_slices_are_pmfs() {
        let mut rng = SimRng::seed_from_u64(1);
        let k = CausalKernel::random(3, 2, 3, &mut rng).unwrap();
        assert!(k.validate().is_ok());
    }

    #[test]
    fn dump_lists_every_slice() {
        let k = CausalKernel::uniform(2, 2, 2).unwrap();
        assert_eq!(k.dump().lines().filter(|l| !l.starts_with('#')).count(), 2 + 8);
    }
}
