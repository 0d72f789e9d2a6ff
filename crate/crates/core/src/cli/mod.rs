//! Batch front end: `causal-rd <command> --config <path> [options]`.
//!
//! Every command writes a CSV (to `--out`, the config's `output`, or
//! stdout) and a short human-readable summary (to stdout, or stderr when
//! the CSV itself goes to stdout). Exit codes: 0 success, 1 domain or
//! convergence failure, 2 configuration error.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{load, FiniteConfig, GaussConfig, Parameters, RateUnit, RunConfig, SourceConfig};

use crate::causal_filter::{simulate_pipeline, stationary_solution, FilterError};
use crate::exec::Execution;
use crate::kernel::{
    blahut_arimoto, brute_force_oracle, solve_for_distortion, KernelError, OracleOptions, SolverResult,
};
use crate::rd_curve::{rna_inverse, sweep};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "causal-rd", version, about = "Nonanticipative rate distortion: Gaussian realizations and finite-alphabet kernels")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// CSV destination (overrides the config's `output`; stdout if neither).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for Monte Carlo draws (overrides `parameters.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Unit used in summaries.
    #[arg(long, value_enum, global = true)]
    pub rate_unit: Option<RateUnit>,
    /// Plain-text dump of the solved kernel (solve-kernel only).
    #[arg(long, global = true)]
    pub kernel_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check detectability, stabilizability and noise definiteness.
    Validate,
    /// Stationary Riccati / water-filling fixed point at distortion D.
    Stationary,
    /// Rate over D_grid, or the distortion achieving rate R.
    RdCurve,
    /// Monte Carlo run of the encoder, channel, decoder and filter.
    Simulate,
    /// Optimal finite-alphabet kernel at distortion D (or each D_grid value).
    SolveKernel,
    /// Compare the kernel solver with the brute-force oracle.
    OracleCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Stationary => "stationary",
            Command::RdCurve => "rd-curve",
            Command::Simulate => "simulate",
            Command::SolveKernel => "solve-kernel",
            Command::OracleCheck => "oracle-check",
        }
    }
}

/// Agreement required by `oracle-check`, in nats per letter.
pub const ORACLE_TOL: f64 = 1e-4;

/// 12 significant digits; negative zero prints as zero.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.11e}", v + 0.0)
}

struct Report {
    csv: String,
    summary: String,
    /// Set when the command ran but its check did not pass (exit 1).
    failure: Option<String>,
}

impl Report {
    fn new(header: &str) -> Self {
        Self {
            csv: format!("{header}\n"),
            summary: String::new(),
            failure: None,
        }
    }

    fn row(&mut self, fields: &[String]) {
        self.csv.push_str(&fields.join(","));
        self.csv.push('\n');
    }

    fn line(&mut self, text: impl AsRef<str>) {
        self.summary.push_str(text.as_ref());
        self.summary.push('\n');
    }
}

fn rate_text(nats: f64, unit: RateUnit) -> String {
    match unit {
        RateUnit::Nats => format!("{} nats", fmt_f64(nats)),
        RateUnit::Bits => format!("{} bits", fmt_f64(nats / std::f64::consts::LN_2)),
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let path = args
        .common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = load(path)?;
    if let Some(named) = &cfg.command {
        if named != args.command.name() {
            return Err(CliError::Config(format!(
                "config names command '{named}' but '{}' was requested",
                args.command.name()
            )));
        }
    }
    let unit = args.common.rate_unit.or(cfg.parameters.rate_unit).unwrap_or_default();
    let seed = args.common.seed.or(cfg.parameters.seed).unwrap_or(0);

    let report = match args.command {
        Command::Validate => validate(&cfg)?,
        Command::Stationary => stationary(&cfg, unit)?,
        Command::RdCurve => rd_curve(&cfg, unit)?,
        Command::Simulate => simulate(&cfg, seed)?,
        Command::SolveKernel => solve_kernel(&cfg, unit, args.common.kernel_out.as_deref())?,
        Command::OracleCheck => oracle_check(&cfg, unit)?,
    };

    let out = args.common.out.clone().or_else(|| cfg.output.clone());
    match out {
        Some(p) => {
            std::fs::write(&p, &report.csv).map_err(|e| CliError::Run(format!("cannot write {}: {e}", p.display())))?;
            print!("{}", report.summary);
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(report.csv.as_bytes())
                .map_err(|e| CliError::Run(format!("cannot write CSV: {e}")))?;
            eprint!("{}", report.summary);
        }
    }
    match report.failure {
        Some(msg) => Err(CliError::Run(msg)),
        None => Ok(()),
    }
}

fn validate(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut r = Report::new("check,value,passes");
    match &cfg.source {
        SourceConfig::GaussMarkov(_) => {
            let src = cfg.gauss_markov()?;
            let v = src.validate().map_err(|e| CliError::Run(e.to_string()))?;
            r.row(&["detectable".into(), fmt_f64(v.detectability.restricted_radius), v.detectability.passes.to_string()]);
            r.row(&[
                "stabilizable".into(),
                fmt_f64(v.stabilizability.restricted_radius),
                v.stabilizability.passes.to_string(),
            ]);
            r.row(&["noise_cov_pd".into(), fmt_f64(v.noise_cov_min_eig), v.noise_cov_pd.to_string()]);
            r.row(&["x0_cov_psd".into(), String::new(), v.x0_cov_psd.to_string()]);
            r.row(&["spectral_radius_a".into(), fmt_f64(v.spectral_radius_a), String::new()]);
            r.line(format!(
                "detectable: {}, stabilizable: {}",
                yes_no(v.detectability.passes),
                yes_no(v.stabilizability.passes)
            ));
            r.line(format!(
                "NNᵀ positive definite: {} (min eigenvalue {})",
                yes_no(v.noise_cov_pd),
                fmt_f64(v.noise_cov_min_eig)
            ));
            r.line(format!("spectral radius of A: {}", fmt_f64(v.spectral_radius_a)));
            if !v.passes() {
                r.failure = Some("source failed validation".into());
            }
        }
        SourceConfig::Finite(_) => {
            let src = cfg.finite()?;
            r.row(&["min_distortion".into(), fmt_f64(src.min_distortion()), "true".into()]);
            r.row(&["zero_rate_distortion".into(), fmt_f64(src.zero_rate_distortion()), "true".into()]);
            r.line(format!(
                "finite source: |X| = {}, |Y| = {}, {} letters",
                src.x_card(),
                src.y_card(),
                src.horizon()
            ));
            r.line(format!(
                "distortion range (per letter): ({}, {})",
                fmt_f64(src.min_distortion()),
                fmt_f64(src.zero_rate_distortion())
            ));
        }
    }
    Ok(r)
}

fn stationary(cfg: &RunConfig, unit: RateUnit) -> Result<Report, CliError> {
    let src = cfg.gauss_markov()?;
    let d = cfg.require_d()?;
    let opts = cfg.filter_options(src.obs_dim())?;
    let sol = stationary_solution(&src, d, &opts)?;
    let mut r = Report::new("D,rate_nats,rate_bits,power,capacity_nats,iterations,residual");
    r.row(&[
        fmt_f64(d),
        fmt_f64(sol.rate_nats),
        fmt_f64(sol.rate_nats / std::f64::consts::LN_2),
        fmt_f64(sol.power),
        fmt_f64(sol.capacity_nats()),
        sol.iterations.to_string(),
        fmt_f64(sol.residual),
    ]);
    r.line(format!("rate: {}", rate_text(sol.rate_nats, unit)));
    r.line(format!("power: {}", fmt_f64(sol.power)));
    r.line(format!("eigenvalues of Λ∞: {:?}", sol.lambda_inf.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>()));
    r.line(format!("iterations: {} (residual {}){}", sol.iterations, fmt_f64(sol.residual), if sol.damped { ", damped" } else { "" }));
    let mut sigma = String::new();
    for row in sol.sigma_inf.to_rows() {
        let _ = writeln!(sigma, "  [{}]", row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(", "));
    }
    r.line(format!("Σ∞ =\n{}", sigma.trim_end()));
    Ok(r)
}

fn rd_curve(cfg: &RunConfig, unit: RateUnit) -> Result<Report, CliError> {
    let src = cfg.gauss_markov()?;
    let opts = cfg.filter_options(src.obs_dim())?;
    let mut r = Report::new("D,rate_nats,rate_bits,power,converged");
    let points = match (&cfg.parameters.d_grid, cfg.parameters.r) {
        (Some(grid), _) => sweep(&src, grid, &opts, Execution::Parallel)?,
        (None, Some(rate)) => {
            let inv = rna_inverse(&src, rate, &opts)?;
            if let Some(cf) = inv.closed_form_distortion {
                r.line(format!("closed-form distortion at the fixed point: {}", fmt_f64(cf)));
            }
            vec![inv.point]
        }
        (None, None) => return Err(CliError::Config("rd-curve needs parameters.D_grid or parameters.R".into())),
    };
    for p in &points {
        r.row(&[
            fmt_f64(p.distortion),
            fmt_f64(p.rate_nats),
            fmt_f64(p.rate_bits),
            fmt_f64(p.power),
            p.converged.to_string(),
        ]);
        r.line(format!("D = {}: {}", fmt_f64(p.distortion), rate_text(p.rate_nats, unit)));
    }
    let failed = points.iter().filter(|p| !p.converged).count();
    if failed > 0 {
        r.line(format!("{failed} point(s) did not converge"));
    }
    Ok(r)
}

fn simulate(cfg: &RunConfig, seed: u64) -> Result<Report, CliError> {
    let src = cfg.gauss_markov()?;
    let d = cfg.require_d()?;
    let steps = cfg
        .parameters
        .t
        .ok_or_else(|| CliError::Config("parameters.T is required for simulate".into()))?;
    let opts = cfg.filter_options(src.obs_dim())?;
    let sol = stationary_solution(&src, d, &opts)?;
    let rep = simulate_pipeline(&src, &sol, steps, seed)?;
    let mut r = Report::new("t,distortion_t,power_t");
    for s in &rep.steps {
        r.row(&[s.t.to_string(), fmt_f64(s.distortion), fmt_f64(s.power)]);
    }
    r.row(&["mean".into(), fmt_f64(rep.empirical_distortion), fmt_f64(rep.empirical_power)]);
    r.line(format!(
        "empirical distortion {} ± {} (target {}), |empirical − D|/D = {}",
        fmt_f64(rep.empirical_distortion),
        fmt_f64(rep.distortion_se),
        fmt_f64(d),
        fmt_f64(rep.relative_distortion_error())
    ));
    r.line(format!(
        "empirical power {} ± {} (predicted {})",
        fmt_f64(rep.empirical_power),
        fmt_f64(rep.power_se),
        fmt_f64(rep.predicted_power)
    ));
    Ok(r)
}

fn solve_kernel(cfg: &RunConfig, unit: RateUnit, kernel_out: Option<&std::path::Path>) -> Result<Report, CliError> {
    let src = cfg.finite()?;
    let opts = cfg.kernel_options()?;
    let targets = cfg.distortions()?;
    let results: Vec<Result<SolverResult, KernelError>> =
        Execution::Parallel.map(&targets, |&d| solve_for_distortion(&src, d, &opts));
    let mut r = Report::new("s,rate_nats,distortion,iterations,converged");
    let mut dump = String::new();
    for (d, res) in targets.iter().zip(results) {
        let res = res?;
        r.row(&[
            fmt_f64(res.s),
            fmt_f64(res.rate_nats),
            fmt_f64(res.avg_distortion),
            res.iterations.to_string(),
            res.converged.to_string(),
        ]);
        r.line(format!(
            "D = {}: {} per letter at s = {}{}",
            fmt_f64(*d),
            rate_text(res.rate_nats, unit),
            fmt_f64(res.s),
            if res.converged { "" } else { " (not converged)" }
        ));
        let _ = writeln!(dump, "# D = {}, s = {}", fmt_f64(*d), fmt_f64(res.s));
        dump.push_str(&res.kernel.dump());
    }
    if let Some(p) = kernel_out {
        std::fs::write(p, dump).map_err(|e| CliError::Run(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(r)
}

fn oracle_check(cfg: &RunConfig, unit: RateUnit) -> Result<Report, CliError> {
    let src = cfg.finite()?;
    let opts = cfg.kernel_options()?;
    let targets = cfg.distortions()?;
    let mut r = Report::new("D,solver_rate_nats,oracle_rate_nats,difference,passes");
    for &d in &targets {
        let solved = solve_for_distortion(&src, d, &opts)?;
        let oracle = brute_force_oracle(&src, d, &OracleOptions::default())?;
        let diff = solved.rate_nats - oracle.rate_nats;
        let ok = diff.abs() <= ORACLE_TOL;
        r.row(&[fmt_f64(d), fmt_f64(solved.rate_nats), fmt_f64(oracle.rate_nats), fmt_f64(diff), ok.to_string()]);
        r.line(format!(
            "D = {}: solver {}, oracle {}: {}",
            fmt_f64(d),
            rate_text(solved.rate_nats, unit),
            rate_text(oracle.rate_nats, unit),
            if ok { "ok" } else { "mismatch" }
        ));
        if !ok {
            r.failure = Some(format!("solver and oracle differ by more than {ORACLE_TOL:e} nats"));
        }
        let iid = src.transition().to_rows().iter().all(|row| row.as_slice() == src.initial());
        if iid {
            let ba = blahut_arimoto(src.initial(), src.distortion(), d)?;
            r.line(format!("  single-letter Blahut–Arimoto: {}", rate_text(ba.rate_nats, unit)));
        }
    }
    Ok(r)
}
