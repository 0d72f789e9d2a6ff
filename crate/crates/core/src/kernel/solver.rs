use serde::Serialize;

use super::tables::{ZERO_PROB, KERNEL_ENTRY_CAP};
use super::{encode, pow, CausalKernel, KernelError, OutputLaw};
use crate::source_model::FiniteSource;

/// Bracket search for `s` gives up beyond this magnitude.
pub const S_LIMIT: f64 = 1e6;
const OSCILLATION_WINDOW: usize = 10;
/// Weight of the uniform law mixed into warm starts so no output symbol
/// starts (and therefore stays) at probability zero.
const WARM_START_MIX: f64 = 1e-6;

/// How the kernel is rebuilt from the current output conditionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// `q_i ∝ ν_i e^{sρ(x_i, y_i) − Ŵ_{i+1}(x_i, y^i)}` where `Ŵ_{i+1}` is the
    /// expected cost-to-go of the later stages (backward recursion
    /// `W_i = −ln Σ_y ν_i e^{sρ − Ŵ_{i+1}}`, `W_{n+1} = 0`). Minimizes the
    /// whole-horizon Lagrangian; this is the solver default.
    #[default]
    CostToGo,
    /// `q_i ∝ ν_i e^{sρ(x_i, y_i)}` stage by stage. Its fixed point is optimal
    /// for memoryless sources and the last stage, but for sources with memory
    /// it ignores how `Y_i` shapes later output conditionals.
    PerStage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelOptions {
    pub rule: UpdateRule,
    /// Fixed-point stop: largest change in any kernel or output entry.
    pub tol: f64,
    pub max_iter: usize,
    /// Accepted `|avg distortion − target|` for the bisection on `s`.
    pub distortion_tol: f64,
    pub bisection_iters: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            rule: UpdateRule::default(),
            tol: 1e-13,
            max_iter: 200_000,
            distortion_tol: 1e-10,
            bisection_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    pub kernel: CausalKernel,
    /// Output conditionals induced by `kernel`.
    pub output_law: OutputLaw,
    pub s: f64,
    pub rule: UpdateRule,
    /// `Σ_i E ln[q_i / ν_i]` with `ν` the induced output law.
    pub rate_total_nats: f64,
    /// `s·D_total − Σ_i E ln Σ_y e^{sρ − Ŵ_{i+1}} ν_i − Σ_i E Ŵ_{i+1}`; with
    /// `PerStage` (`Ŵ ≡ 0`) this is `s·D_total − Σ_i E ln Σ_y e^{sρ} ν_i`.
    pub dual_rate_total_nats: f64,
    pub total_distortion: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Tables that depend on the source only through the current letter:
/// kernels `[i][(hist·|X| + x)·|Y| + y]`, outputs `[i][hist·|Y| + y]` and
/// forward weights `α_i(y^{i−1}, x_i)` at `[i][hist·|X| + x]`.
struct Compact<'a> {
    source: &'a FiniteSource,
    s: f64,
    rule: UpdateRule,
    q: Vec<Vec<f64>>,
    nu: Vec<Vec<f64>>,
    cost: Vec<Vec<f64>>,
    cost_to_go: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl<'a> Compact<'a> {
    fn new(source: &'a FiniteSource, s: f64, rule: UpdateRule, nu: Vec<Vec<f64>>) -> Self {
        let (xc, yc) = (source.x_card(), source.y_card());
        let h = source.horizon();
        let hists = |i: usize| yc.pow(i as u32);
        Self {
            source,
            s,
            rule,
            q: (0..h).map(|i| vec![0.0; hists(i) * xc * yc]).collect(),
            nu,
            cost: (0..h).map(|i| vec![0.0; hists(i) * xc]).collect(),
            cost_to_go: (0..h).map(|i| vec![0.0; hists(i) * xc * yc]).collect(),
            alpha: (0..h).map(|i| vec![0.0; hists(i) * xc]).collect(),
        }
    }

    /// Rebuilds `q` from `ν` (and the cost-to-go), last stage first.
    fn backward(&mut self) {
        let src = self.source;
        let (xc, yc, h) = (src.x_card(), src.y_card(), src.horizon());
        let t = src.transition();
        let mut logits = vec![0.0; yc];
        for i in (0..h).rev() {
            let (head, tail) = self.cost.split_at_mut(i + 1);
            let next_cost = tail.first();
            for hist in 0..yc.pow(i as u32) {
                for x in 0..xc {
                    let base = (hist * xc + x) * yc;
                    for y in 0..yc {
                        let ahead = match (self.rule, next_cost) {
                            (UpdateRule::CostToGo, Some(w)) => {
                                let nh = hist * yc + y;
                                (0..xc).map(|x1| t[(x, x1)] * w[nh * xc + x1]).sum()
                            }
                            _ => 0.0,
                        };
                        self.cost_to_go[i][base + y] = ahead;
                        logits[y] = self.nu[i][hist * yc + y].ln() + self.s * src.rho(x, y) - ahead;
                    }
                    let lse = log_sum_exp(&logits);
                    head[i][hist * xc + x] = -lse;
                    for y in 0..yc {
                        self.q[i][base + y] = (logits[y] - lse).exp();
                    }
                }
            }
        }
    }

    /// Propagates `α` forward and returns the induced output conditionals.
    /// Histories of probability zero keep their previous conditional.
    fn forward(&mut self) -> Vec<Vec<f64>> {
        let src = self.source;
        let (xc, yc, h) = (src.x_card(), src.y_card(), src.horizon());
        let t = src.transition();
        self.alpha[0].copy_from_slice(src.initial());
        let mut nu = self.nu.clone();
        for i in 0..h {
            if i + 1 < h {
                self.alpha[i + 1].iter_mut().for_each(|a| *a = 0.0);
            }
            for hist in 0..yc.pow(i as u32) {
                let mass: f64 = (0..xc).map(|x| self.alpha[i][hist * xc + x]).sum();
                for y in 0..yc {
                    let joint: f64 = (0..xc)
                        .map(|x| self.alpha[i][hist * xc + x] * self.q[i][(hist * xc + x) * yc + y])
                        .sum();
                    if mass > ZERO_PROB {
                        nu[i][hist * yc + y] = joint / mass;
                    }
                    if i + 1 < h {
                        let nh = hist * yc + y;
                        for x in 0..xc {
                            let w = self.alpha[i][hist * xc + x] * self.q[i][(hist * xc + x) * yc + y];
                            if w != 0.0 {
                                for x1 in 0..xc {
                                    self.alpha[i + 1][nh * xc + x1] += w * t[(x, x1)];
                                }
                            }
                        }
                    }
                }
            }
        }
        nu
    }

    /// `(rate, dual rate, total distortion)` for the current `q`, `α` and
    /// the `ν` that `q` was built from, against the induced `nu_true`.
    fn evaluate(&self, nu_true: &[Vec<f64>]) -> (f64, f64, f64) {
        let src = self.source;
        let (xc, yc, h) = (src.x_card(), src.y_card(), src.horizon());
        let (mut rate, mut dist, mut normalizers, mut ahead) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..h {
            for hist in 0..yc.pow(i as u32) {
                for x in 0..xc {
                    let a = self.alpha[i][hist * xc + x];
                    if a <= ZERO_PROB {
                        continue;
                    }
                    normalizers += a * -self.cost[i][hist * xc + x];
                    for y in 0..yc {
                        let k = (hist * xc + x) * yc + y;
                        let q = self.q[i][k];
                        if q <= ZERO_PROB {
                            continue;
                        }
                        rate += a * q * (q / nu_true[i][hist * yc + y]).ln();
                        dist += a * q * src.rho(x, y);
                        ahead += a * q * self.cost_to_go[i][k];
                    }
                }
            }
        }
        (rate.max(0.0), self.s * dist - normalizers - ahead, dist)
    }

    fn expand(&self) -> Result<CausalKernel, KernelError> {
        let (xc, yc) = (self.source.x_card(), self.source.y_card());
        CausalKernel::from_fn(xc, yc, self.source.horizon(), |i, yh, xp| {
            let base = (encode(yh, yc) * xc + xp[i]) * yc;
            self.q[i][base..base + yc].to_vec()
        })
    }
}

fn max_change(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_size(source: &FiniteSource) -> Result<(), KernelError> {
    let (xc, yc, h) = (source.x_card(), source.y_card(), source.horizon());
    let count = pow(yc, h)?.saturating_mul(xc);
    if count > KERNEL_ENTRY_CAP {
        return Err(KernelError::TooLarge {
            what: "kernel stage",
            count,
            cap: KERNEL_ENTRY_CAP,
        });
    }
    Ok(())
}

fn uniform_nu(source: &FiniteSource) -> Vec<Vec<f64>> {
    let yc = source.y_card();
    (0..source.horizon()).map(|i| vec![1.0 / yc as f64; yc.pow(i as u32 + 1)]).collect()
}

fn run_fixed_point(
    source: &FiniteSource,
    s: f64,
    opts: &KernelOptions,
    init: Vec<Vec<f64>>,
) -> Result<FixedPoint, KernelError> {
    if !(s <= 0.0 && s.is_finite()) {
        return Err(KernelError::Domain(format!("s must be finite and non-positive, got {s}")));
    }
    let mut c = Compact::new(source, s, opts.rule, init);
    let mut prev_q = c.q.clone();
    let (mut residual, mut rising, mut damped) = (f64::INFINITY, 0, false);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        c.backward();
        let nu_new = c.forward();
        let r = max_change(&c.q, &prev_q).max(max_change(&nu_new, &c.nu));
        rising = if r >= residual { rising + 1 } else { 0 };
        if rising >= OSCILLATION_WINDOW {
            damped = true;
        }
        residual = r;
        if residual < opts.tol {
            converged = true;
            break;
        }
        prev_q.clone_from(&c.q);
        c.nu = if damped {
            c.nu.iter()
                .zip(&nu_new)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
                .collect()
        } else {
            nu_new
        };
    }
    // `q` was built from `c.nu`; report against the law it induces.
    let nu_true = c.forward();
    let (rate_total_nats, dual_rate_total_nats, total_distortion) = c.evaluate(&nu_true);
    Ok(FixedPoint {
        kernel: c.expand()?,
        output_law: OutputLaw::from_stages(source.y_card(), source.horizon(), nu_true),
        s,
        rule: opts.rule,
        rate_total_nats,
        dual_rate_total_nats,
        total_distortion,
        iterations,
        residual,
        converged,
    })
}

/// Alternates kernel and output-law updates at slope `s ≤ 0` from a
/// uniform output law until no table entry moves by more than `opts.tol`.
/// Non-convergence within `opts.max_iter` is reported, not raised.
pub fn fixed_point_kernel(source: &FiniteSource, s: f64, opts: &KernelOptions) -> Result<FixedPoint, KernelError> {
    check_size(source)?;
    run_fixed_point(source, s, opts, uniform_nu(source))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub kernel: CausalKernel,
    pub output_law: OutputLaw,
    /// Distortion multiplier, `≤ 0`.
    pub s: f64,
    pub rule: UpdateRule,
    pub rate_total_nats: f64,
    /// Per letter, `rate_total_nats / (n + 1)`.
    pub rate_nats: f64,
    pub dual_rate_total_nats: f64,
    /// Per letter.
    pub avg_distortion: f64,
    pub target_distortion: f64,
    /// Fixed-point iterations summed over every evaluated `s`.
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl SolverResult {
    fn from_fixed_point(fp: FixedPoint, horizon: usize, target: f64, iterations: usize, converged: bool) -> Self {
        let h = horizon as f64;
        Self {
            rate_nats: fp.rate_total_nats / h,
            avg_distortion: fp.total_distortion / h,
            kernel: fp.kernel,
            output_law: fp.output_law,
            s: fp.s,
            rule: fp.rule,
            rate_total_nats: fp.rate_total_nats,
            dual_rate_total_nats: fp.dual_rate_total_nats,
            target_distortion: target,
            iterations,
            residual: fp.residual,
            converged,
        }
    }
}

fn zero_rate_result(source: &FiniteSource, target: f64) -> Result<SolverResult, KernelError> {
    let (xc, yc, h) = (source.x_card(), source.y_card(), source.horizon());
    let best: Vec<usize> = (0..h)
        .map(|i| {
            let p = source.marginal(i);
            let cost = |y: usize| (0..xc).map(|x| p[x] * source.rho(x, y)).sum::<f64>();
            (0..yc).min_by(|&a, &b| cost(a).total_cmp(&cost(b))).unwrap_or(0)
        })
        .collect();
    let point = |i: usize| {
        let mut v = vec![0.0; yc];
        v[best[i]] = 1.0;
        v
    };
    let kernel = CausalKernel::from_fn(xc, yc, h, |i, _, _| point(i))?;
    let stages = (0..h).map(|i| (0..yc.pow(i as u32)).flat_map(|_| point(i)).collect()).collect();
    let d_max = source.zero_rate_distortion();
    Ok(SolverResult {
        kernel,
        output_law: OutputLaw::from_stages(yc, h, stages),
        s: 0.0,
        rule: UpdateRule::default(),
        rate_total_nats: 0.0,
        rate_nats: 0.0,
        dual_rate_total_nats: 0.0,
        avg_distortion: d_max,
        target_distortion: target,
        iterations: 0,
        residual: 0.0,
        converged: true,
    })
}

fn warm(nu: &[Vec<f64>]) -> Vec<Vec<f64>> {
    nu.iter()
        .map(|stage| {
            let u = 1.0 / stage.len() as f64;
            stage.iter().map(|v| (1.0 - WARM_START_MIX) * v + WARM_START_MIX * u).collect()
        })
        .collect()
}

/// Minimum per-letter rate at per-letter distortion `target`.
///
/// Targets at or above the zero-rate distortion return the best constant
/// reconstruction with `s = 0`. Otherwise `s` is bracketed by doubling from
/// `−1` and bisected until the distortion is within `opts.distortion_tol` of
/// the target; each evaluation warm-starts from the previous output law.
pub fn solve_for_distortion(source: &FiniteSource, target: f64, opts: &KernelOptions) -> Result<SolverResult, KernelError> {
    check_size(source)?;
    let (d_min, d_max) = (source.min_distortion(), source.zero_rate_distortion());
    if !target.is_finite() {
        return Err(KernelError::Domain(format!("distortion target {target} is not finite")));
    }
    if target >= d_max {
        return zero_rate_result(source, target);
    }
    if target <= d_min {
        return Err(KernelError::Domain(format!(
            "distortion target {target} is at or below the minimum attainable {d_min}"
        )));
    }
    let h = source.horizon() as f64;
    let per_letter = |fp: &FixedPoint| fp.total_distortion / h;
    let mut total_iters = 0;

    let mut s_lo = -1.0;
    let mut lo_fp = loop {
        let fp = run_fixed_point(source, s_lo, opts, uniform_nu(source))?;
        total_iters += fp.iterations;
        if per_letter(&fp) < target {
            break fp;
        }
        s_lo *= 2.0;
        if s_lo.abs() > S_LIMIT {
            return Err(KernelError::Domain(format!(
                "distortion target {target} is too close to the minimum {d_min}: |s| exceeds {S_LIMIT:e}"
            )));
        }
    };
    if (per_letter(&lo_fp) - target).abs() <= opts.distortion_tol {
        let ok = lo_fp.converged;
        return Ok(SolverResult::from_fixed_point(lo_fp, source.horizon(), target, total_iters, ok));
    }

    let mut s_hi = 0.0;
    let mut last_nu = lo_fp.output_law_stages();
    for _ in 0..opts.bisection_iters {
        let mid = 0.5 * (s_lo + s_hi);
        if !(mid > s_lo && mid < s_hi) {
            break;
        }
        let fp = run_fixed_point(source, mid, opts, warm(&last_nu))?;
        total_iters += fp.iterations;
        last_nu = fp.output_law_stages();
        let d = per_letter(&fp);
        if (d - target).abs() <= opts.distortion_tol {
            let ok = fp.converged;
            return Ok(SolverResult::from_fixed_point(fp, source.horizon(), target, total_iters, ok));
        }
        if d > target {
            s_hi = mid;
        } else {
            s_lo = mid;
            lo_fp = fp;
        }
    }
    // Bracket exhausted: return the feasible side, flagged.
    Ok(SolverResult::from_fixed_point(lo_fp, source.horizon(), target, total_iters, false))
}

impl FixedPoint {
    fn output_law_stages(&self) -> Vec<Vec<f64>> {
        (0..self.output_law.horizon()).map(|i| self.output_law.stage(i).to_vec()).collect()
    }
}
