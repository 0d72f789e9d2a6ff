//! Reference solvers that share no code with the fixed-point solver.

use serde::Serialize;

use super::tables::{random_pmf, ZERO_PROB};
use super::{encode, KernelError};
use crate::numerics::{Matrix, SimRng};
use crate::source_model::{decode_path, FiniteSource};

const S_LIMIT: f64 = 1e6;
/// Lower bound kept on every table entry so `ln q` stays finite.
const FLOOR: f64 = 1e-14;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlahutArimoto {
    pub rate_nats: f64,
    pub distortion: f64,
    pub s: f64,
}

fn ba_at_slope(pmf: &[f64], rho: &Matrix, s: f64) -> (f64, f64) {
    let (xc, yc) = (pmf.len(), rho.cols());
    let mut r = vec![1.0 / yc as f64; yc];
    let mut q = vec![0.0; xc * yc];
    for _ in 0..1_000_000 {
        for x in 0..xc {
            let z: f64 = (0..yc).map(|y| r[y] * (s * rho[(x, y)]).exp()).sum();
            for y in 0..yc {
                q[x * yc + y] = r[y] * (s * rho[(x, y)]).exp() / z;
            }
        }
        let next: Vec<f64> = (0..yc).map(|y| (0..xc).map(|x| pmf[x] * q[x * yc + y]).sum()).collect();
        let change = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r = next;
        if change < 1e-15 {
            break;
        }
    }
    let (mut rate, mut dist) = (0.0, 0.0);
    for x in 0..xc {
        for y in 0..yc {
            let p = pmf[x] * q[x * yc + y];
            if p > ZERO_PROB {
                rate += p * (q[x * yc + y] / r[y]).ln();
                dist += p * rho[(x, y)];
            }
        }
    }
    (rate.max(0.0), dist)
}

/// Classical single-letter rate-distortion function by Blahut–Arimoto with
/// bisection on the slope.
pub fn blahut_arimoto(pmf: &[f64], rho: &Matrix, target: f64) -> Result<BlahutArimoto, KernelError> {
    if rho.rows() != pmf.len() {
        return Err(KernelError::Shape(format!("ρ has {} rows for {} symbols", rho.rows(), pmf.len())));
    }
    let yc = rho.cols();
    let d_max = (0..yc)
        .map(|y| pmf.iter().enumerate().map(|(x, p)| p * rho[(x, y)]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if target >= d_max {
        return Ok(BlahutArimoto {
            rate_nats: 0.0,
            distortion: d_max,
            s: 0.0,
        });
    }
    let mut lo = -1.0;
    while ba_at_slope(pmf, rho, lo).1 >= target {
        lo *= 2.0;
        if lo.abs() > S_LIMIT {
            return Err(KernelError::Domain(format!("target {target} is not attainable")));
        }
    }
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let (_, d) = ba_at_slope(pmf, rho, mid);
        if d > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (rate_nats, distortion) = ba_at_slope(pmf, rho, lo);
    Ok(BlahutArimoto {
        rate_nats,
        distortion,
        s: lo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOptions {
    /// Random starting kernels per slope, in addition to a warm start.
    pub restarts: usize,
    pub seed: u64,
    /// Mirror-descent iterations per start.
    pub max_iter: usize,
    /// Bisection steps on the slope.
    pub resolution: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            seed: 0x5eed,
            max_iter: 20_000,
            resolution: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub rate_total_nats: f64,
    /// Per letter.
    pub rate_nats: f64,
    /// Per letter.
    pub avg_distortion: f64,
    pub s: f64,
}

/// Whole-horizon tables with full `x^i` dependence, flattened per stage as
/// `[hist][path][y]`.
struct Problem {
    yc: usize,
    h: usize,
    mu: Vec<f64>,
    rho_sum: Vec<f64>,
    /// `(hist index, path index)` at stage `i` for each `(x^n, y^n)`.
    offsets: Vec<Vec<usize>>,
    ys: Vec<Vec<usize>>,
    sizes: Vec<usize>,
}

struct Eval {
    lagrangian: f64,
    rate: f64,
    dist: f64,
    cond: Vec<f64>,
    nu: Vec<f64>,
}

impl Problem {
    fn new(source: &FiniteSource) -> Self {
        let (xc, yc, h) = (source.x_card(), source.y_card(), source.horizon());
        let (xn, yn) = (xc.pow(h as u32), yc.pow(h as u32));
        let xs: Vec<Vec<usize>> = (0..xn).map(|x| decode_path(x, xc, h)).collect();
        let ys: Vec<Vec<usize>> = (0..yn).map(|y| decode_path(y, yc, h)).collect();
        let mut rho_sum = vec![0.0; xn * yn];
        let mut offsets = vec![vec![0; h]; xn * yn];
        for x in 0..xn {
            for y in 0..yn {
                rho_sum[x * yn + y] = (0..h).map(|i| source.rho(xs[x][i], ys[y][i])).sum();
                for i in 0..h {
                    let paths = xc.pow(i as u32 + 1);
                    let hist = encode(&ys[y][..i], yc);
                    let path = encode(&xs[x][..=i], xc);
                    offsets[x * yn + y][i] = (hist * paths + path) * yc;
                }
            }
        }
        Self {
            yc,
            h,
            mu: xs.iter().map(|p| source.path_probability(p)).collect(),
            rho_sum,
            offsets,
            ys,
            sizes: (0..h).map(|i| yc.pow(i as u32) * xc.pow(i as u32 + 1) * yc).collect(),
        }
    }

    fn yn(&self) -> usize {
        self.ys.len()
    }

    fn random(&self, rng: &mut SimRng) -> Vec<Vec<f64>> {
        let mut t: Vec<Vec<f64>> = self
            .sizes
            .iter()
            .map(|&n| (0..n / self.yc).flat_map(|_| random_pmf(self.yc, rng)).collect())
            .collect();
        for stage in &mut t {
            for slice in stage.chunks_mut(self.yc) {
                renormalize(slice);
            }
        }
        t
    }

    fn eval(&self, t: &[Vec<f64>], s: f64) -> Eval {
        let yn = self.yn();
        let mut cond = vec![0.0; self.mu.len() * yn];
        let mut nu = vec![0.0; yn];
        for (x, &mu) in self.mu.iter().enumerate() {
            for y in 0..yn {
                let k = x * yn + y;
                let q: f64 = (0..self.h).map(|i| t[i][self.offsets[k][i] + self.ys[y][i]]).product();
                cond[k] = q;
                nu[y] += mu * q;
            }
        }
        let (mut rate, mut dist) = (0.0, 0.0);
        for (x, &mu) in self.mu.iter().enumerate() {
            if mu == 0.0 {
                continue;
            }
            for y in 0..yn {
                let k = x * yn + y;
                let p = mu * cond[k];
                if p > ZERO_PROB {
                    rate += p * (cond[k] / nu[y]).ln();
                }
                dist += p * self.rho_sum[k];
            }
        }
        Eval {
            lagrangian: rate - s * dist,
            rate,
            dist,
            cond,
            nu,
        }
    }

    /// Raw gradient of the Lagrangian and the same gradient divided by the
    /// probability of each slice's conditioning context.
    fn gradient(&self, t: &[Vec<f64>], e: &Eval, s: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let yn = self.yn();
        let mut g: Vec<Vec<f64>> = self.sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut w: Vec<Vec<f64>> = self.sizes.iter().map(|&n| vec![0.0; n / self.yc]).collect();
        for (x, &mu) in self.mu.iter().enumerate() {
            if mu == 0.0 {
                continue;
            }
            for y in 0..yn {
                let k = x * yn + y;
                let score = (e.cond[k] / e.nu[y]).ln() - s * self.rho_sum[k];
                for i in 0..self.h {
                    let o = self.offsets[k][i];
                    let yi = self.ys[y][i];
                    let others: f64 = (0..self.h)
                        .filter(|&j| j != i)
                        .map(|j| t[j][self.offsets[k][j] + self.ys[y][j]])
                        .product();
                    g[i][o + yi] += mu * others * score;
                    w[i][o / self.yc] += mu * e.cond[k];
                }
            }
        }
        let scaled = g
            .iter()
            .zip(&w)
            .map(|(gi, wi)| {
                gi.iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let weight = wi[k / self.yc];
                        if weight > ZERO_PROB {
                            v / weight
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        (g, scaled)
    }

    /// Entropic mirror descent on the scaled gradient with Armijo
    /// backtracking: each slice is multiplied by `exp(−step·g)` and
    /// renormalized.
    fn minimize(&self, mut t: Vec<Vec<f64>>, s: f64, max_iter: usize) -> (Vec<Vec<f64>>, Eval) {
        let mut e = self.eval(&t, s);
        let mut step = 1.0;
        for _ in 0..max_iter {
            let (raw, scaled) = self.gradient(&t, &e, s);
            let mut accepted = None;
            while step > 1e-20 {
                let mut cand = t.clone();
                for (stage, dir) in cand.iter_mut().zip(&scaled) {
                    for (slice, d) in stage.chunks_mut(self.yc).zip(dir.chunks(self.yc)) {
                        let shift = d.iter().copied().fold(f64::INFINITY, f64::min);
                        for (v, g) in slice.iter_mut().zip(d) {
                            *v *= (-step * (g - shift)).exp();
                        }
                        renormalize(slice);
                    }
                }
                let decrease: f64 = raw
                    .iter()
                    .flatten()
                    .zip(t.iter().flatten().zip(cand.iter().flatten()))
                    .map(|(g, (a, b))| g * (a - b))
                    .sum();
                let ce = self.eval(&cand, s);
                if ce.lagrangian <= e.lagrangian - ARMIJO * decrease {
                    accepted = Some((cand, ce));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, ce)) = accepted else { break };
            let change = t
                .iter()
                .flatten()
                .zip(cand.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            t = cand;
            e = ce;
            step = (step * 2.0).min(1e3);
            if change < 1e-14 {
                break;
            }
        }
        (t, e)
    }
}

/// Rescales to unit mass, keeping every entry at least `FLOOR`.
fn renormalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x = (*x / total).max(FLOOR);
    }
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// Brute-force nonanticipative rate: minimizes `I − s·D` over every causal
/// table (full `x^i` dependence) by mirror descent from a warm start
/// and random restarts, bisecting `s` towards the target. Returns the
/// smallest rate among evaluated kernels that meet the target, so the
/// value can only err upwards.
pub fn brute_force_oracle(source: &FiniteSource, target: f64, opts: &OracleOptions) -> Result<OracleResult, KernelError> {
    if source.horizon() > 3 || source.x_card() > 3 || source.y_card() > 3 {
        return Err(KernelError::TooLarge {
            what: "brute-force problem (needs n ≤ 2 and alphabets ≤ 3)",
            count: source.horizon().max(source.x_card()).max(source.y_card()),
            cap: 3,
        });
    }
    let h = source.horizon() as f64;
    let d_max = source.zero_rate_distortion();
    if target >= d_max {
        return Ok(OracleResult {
            rate_total_nats: 0.0,
            rate_nats: 0.0,
            avg_distortion: d_max,
            s: 0.0,
        });
    }
    if target <= source.min_distortion() {
        return Err(KernelError::Domain(format!("target {target} is not attainable")));
    }
    let problem = Problem::new(source);
    let mut rng = SimRng::seed_from_u64(opts.seed);
    let mut warm = problem.random(&mut rng);
    let mut best: Option<OracleResult> = None;
    let mut solve = |s: f64, warm: &mut Vec<Vec<f64>>, best: &mut Option<OracleResult>| -> f64 {
        let mut starts = vec![warm.clone()];
        starts.extend((0..opts.restarts).map(|_| problem.random(&mut rng)));
        let (t, e) = starts
            .into_iter()
            .map(|t0| problem.minimize(t0, s, opts.max_iter))
            .min_by(|a, b| a.1.lagrangian.total_cmp(&b.1.lagrangian))
            .expect("at least one start");
        let d = e.dist / h;
        if d <= target && best.is_none_or(|b| e.rate < b.rate_total_nats) {
            *best = Some(OracleResult {
                rate_total_nats: e.rate,
                rate_nats: e.rate / h,
                avg_distortion: d,
                s,
            });
        }
        *warm = t;
        d
    };

    let mut lo = -1.0;
    while solve(lo, &mut warm, &mut best) >= target {
        lo *= 2.0;
        if lo.abs() > S_LIMIT {
            return Err(KernelError::Domain(format!("target {target} is not attainable")));
        }
    }
    let mut hi = 0.0;
    for _ in 0..opts.resolution {
        let mid = 0.5 * (lo + hi);
        let d = solve(mid, &mut warm, &mut best);
        if (d - target).abs() < 1e-12 {
            break;
        }
        if d > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    best.ok_or_else(|| KernelError::Domain("no evaluated kernel met the target".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn hb(p: f64) -> f64 {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }

    #[test]
    fn renormalize_keeps_floor() {
        let mut v = [0.7, 0.7, 0.0];
        renormalize(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(v.iter().all(|x| *x >= FLOOR * (1.0 - 1e-12)));
    }

    #[test]
    fn blahut_arimoto_binary() {
        let r = blahut_arimoto(&[0.5, 0.5], &FiniteSource::hamming(2), 0.25).unwrap();
        assert!((r.rate_nats - (LN_2 - hb(0.25))).abs() < 1e-10);
        assert_eq!(blahut_arimoto(&[0.5, 0.5], &FiniteSource::hamming(2), 0.6).unwrap().rate_nats, 0.0);
    }

    #[test]
    fn brute_force_single_letter() {
        let s = FiniteSource::iid(vec![0.5, 0.5], FiniteSource::hamming(2), 1).unwrap();
        let r = brute_force_oracle(&s, 0.25, &OracleOptions::default()).unwrap();
        assert!((r.rate_nats - (LN_2 - hb(0.25))).abs() < 1e-6, "{}", r.rate_nats);
        assert_eq!(brute_force_oracle(&s, 0.5, &OracleOptions::default()).unwrap().rate_nats, 0.0);
    }

    #[test]
    fn size_cap() {
        let s = FiniteSource::iid(vec![0.5, 0.5], FiniteSource::hamming(2), 4).unwrap();
        assert!(matches!(
            brute_force_oracle(&s, 0.2, &OracleOptions::default()),
            Err(KernelError::TooLarge { .. })
        ));
    }
}
