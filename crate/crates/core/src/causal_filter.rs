//! Realization of the Gaussian nonanticipative RDF over a vector AWGN channel.
//!
//! The encoder whitens the observation into the innovation
//! `K_t = Y_t − C X̂_t`, rotates it into the eigenbasis of its covariance
//! `Λ_t`, scales each coordinate by the compression operator `𝒜` and sends
//! it over `B_t = A_t + Z_t`, `Z_t ~ N(0, Q)`. The decoder scales by `ℬ`,
//! rotates back and adds the prediction `C X̂_t`; `X̂_t` is propagated by a
//! Kalman filter whose observation is the reconstruction `Ỹ_t` itself.
//!
//! Basis convention: [`RealizationOperators::basis`] holds the eigenvectors
//! of `Λ` as *columns* (`Λ = V diag(λ) Vᵀ`), so the rotation applied by the
//! encoder is `Vᵀ` and the decoder applies `V`.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{
    gaussian_sample, norm_sq, sub_vec, sym_eig, sym_pinv, Matrix, NumericsError, SimRng, Vector, DEFAULT_EIG_TOL,
};
use crate::source_model::{psd_sqrt, GaussMarkovSource, SourceError};
use crate::waterfill::{reverse_waterfill, WaterfillAllocation, WaterfillError};

pub const DEFAULT_RICCATI_TOL: f64 = 1e-12;
pub const DEFAULT_RICCATI_MAX_ITER: usize = 100_000;
/// Relative eigenvalue cutoff for the pseudo-inverse of the innovation
/// covariance of `Ỹ` (zero-gain dimensions make it singular).
const PINV_REL_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
/// Consecutive non-decreasing residuals before damping kicks in.
const OSCILLATION_WINDOW: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Waterfill(#[from] WaterfillError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("innovation covariance is not positive definite (min eigenvalue {0:e}); check NNᵀ")]
    InnovationsNotPd(f64),
    #[error("covariance update lost positive semidefiniteness (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("channel noise variance {index} is {value}; must be positive")]
    ChannelNoise { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    Domain(String),
    #[error("Riccati iteration did not converge in {iterations} steps (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Which noise term enters the innovation covariance `M_t` of `Ỹ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderNoise {
    /// `Vℬ Q ℬᵀVᵀ`: the actual covariance of the decoder noise.
    #[default]
    ChannelConsistent,
    /// `Vℬℬᵀ Vᵀ`, which agrees with the consistent form only for `Q = I`.
    UnitChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOptions {
    /// Diagonal of the channel noise covariance `Q`.
    pub channel_noise: Vector,
    pub tol: f64,
    pub max_iter: usize,
    pub decoder_noise: DecoderNoise,
}

impl FilterOptions {
    pub fn unit_channel(p: usize) -> Self {
        Self {
            channel_noise: vec![1.0; p],
            tol: DEFAULT_RICCATI_TOL,
            max_iter: DEFAULT_RICCATI_MAX_ITER,
            decoder_noise: DecoderNoise::default(),
        }
    }

    pub fn with_channel_noise(mut self, q: Vector) -> Self {
        self.channel_noise = q;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationOperators {
    /// Eigenvectors of `Λ` as columns.
    pub basis: Matrix,
    /// Diagonal of `Q`.
    pub channel_noise: Vector,
    /// `𝒜 = √(QΔ⁻¹H)`.
    pub compress: Matrix,
    /// `ℬ = √(HΔQ⁻¹)`.
    pub decompress: Matrix,
    pub allocation: WaterfillAllocation,
}

impl RealizationOperators {
    pub fn gains(&self) -> Matrix {
        Matrix::from_diag(&self.allocation.eta)
    }

    pub fn distortions(&self) -> Matrix {
        Matrix::from_diag(&self.allocation.delta)
    }

    pub fn channel_noise_cov(&self) -> Matrix {
        Matrix::from_diag(&self.channel_noise)
    }

    /// `V H Vᵀ`: the map from innovation to its noiseless reconstruction.
    pub fn reconstruction_map(&self) -> Matrix {
        self.basis.congruence(&self.gains())
    }

    /// `E{A_t A_tᵀ} = 𝒜 Vᵀ Λ V 𝒜ᵀ` for an innovation covariance `Λ`.
    pub fn channel_input_cov(&self, innovations_cov: &Matrix) -> Matrix {
        let rotated = self.basis.transpose().congruence(innovations_cov);
        self.compress.congruence(&rotated)
    }

    /// `½ ln |I + E{AAᵀ} Q⁻¹|`, computed through a general determinant.
    pub fn capacity_nats(&self, innovations_cov: &Matrix) -> f64 {
        let p = self.channel_noise.len();
        let q_inv = Matrix::from_diag(&self.channel_noise.iter().map(|q| 1.0 / q).collect::<Vec<_>>());
        let snr = &self.channel_input_cov(innovations_cov) * &q_inv;
        0.5 * (&Matrix::identity(p) + &snr).determinant().ln()
    }

    /// Average channel input power `Σ_i q_i η_i λ_i / δ_i = tr(𝒜 diag(λ) 𝒜ᵀ)`.
    pub fn power(&self) -> f64 {
        let a = &self.allocation;
        (0..a.dim())
            .filter(|&i| a.eta[i] > 0.0)
            .map(|i| self.channel_noise[i] * a.eta[i] * a.lambda[i] / a.delta[i])
            .sum()
    }
}

/// `Λ = CΣCᵀ + NNᵀ`, the covariance of `K_t = Y_t − E{Y_t | Ỹ^{t−1}}`.
pub fn innovations_covariance(source: &GaussMarkovSource, sigma: &Matrix) -> Result<Matrix, FilterError> {
    let m = source.state_dim();
    if sigma.shape() != (m, m) {
        return Err(FilterError::Domain(format!(
            "sigma is {}x{}, expected {m}x{m}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    let lambda = (&source.c.congruence(sigma) + &source.obs_noise_cov()).symmetrized();
    let eig = sym_eig(&lambda, DEFAULT_EIG_TOL)?;
    let min = *eig.values.last().unwrap_or(&0.0);
    if !(min > 0.0) {
        return Err(FilterError::InnovationsNotPd(min));
    }
    Ok(lambda)
}

fn check_channel_noise(q: &[f64]) -> Result<(), FilterError> {
    for (index, &value) in q.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(FilterError::ChannelNoise { index, value });
        }
    }
    Ok(())
}

/// Builds `𝒜` and `ℬ` for an allocation in eigenbasis `basis`.
pub fn build_operators(
    allocation: &WaterfillAllocation,
    basis: &Matrix,
    channel_noise: &[f64],
) -> Result<RealizationOperators, FilterError> {
    let p = allocation.dim();
    check_channel_noise(channel_noise)?;
    if channel_noise.len() != p || basis.shape() != (p, p) {
        return Err(FilterError::Domain(format!(
            "allocation has {p} dimensions but Q has {} and the basis is {}x{}",
            channel_noise.len(),
            basis.rows(),
            basis.cols()
        )));
    }
    let mut compress = Matrix::zeros(p, p);
    let mut decompress = Matrix::zeros(p, p);
    for i in 0..p {
        let (eta, delta, q) = (allocation.eta[i], allocation.delta[i], channel_noise[i]);
        if eta == 0.0 {
            continue;
        }
        if delta <= 0.0 {
            return Err(FilterError::Domain(format!("dimension {i} has η = {eta} but δ = {delta}")));
        }
        compress[(i, i)] = (q * eta / delta).sqrt();
        decompress[(i, i)] = (eta * delta / q).sqrt();
    }
    Ok(RealizationOperators {
        basis: basis.clone(),
        channel_noise: channel_noise.to_vec(),
        compress,
        decompress,
        allocation: allocation.clone(),
    })
}

/// Everything the encoder, decoder and filter need at one time step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    pub sigma: Matrix,
    pub innovations_cov: Matrix,
    pub operators: RealizationOperators,
    /// `Ĉ = V H Vᵀ C`.
    pub effective_obs: Matrix,
    /// Covariance of `Ỹ_t − C X̂_t`.
    pub m: Matrix,
    /// Filter gain `A Σ Ĉᵀ M⁺`.
    pub gain: Matrix,
    pub sigma_next: Matrix,
}

/// One step of the coupled Riccati / water-filling recursion.
pub fn riccati_step(
    source: &GaussMarkovSource,
    sigma: &Matrix,
    budget: f64,
    opts: &FilterOptions,
) -> Result<Stage, FilterError> {
    let lambda_mat = innovations_covariance(source, sigma)?;
    let eig = sym_eig(&lambda_mat, DEFAULT_EIG_TOL)?;
    let allocation = reverse_waterfill(&eig.values, budget)?;
    if opts.channel_noise.len() != source.obs_dim() {
        return Err(FilterError::Domain(format!(
            "Q has {} entries but observations have dimension {}",
            opts.channel_noise.len(),
            source.obs_dim()
        )));
    }
    let operators = build_operators(&allocation, &eig.vectors, &opts.channel_noise)?;

    let recon = operators.reconstruction_map();
    let effective_obs = &recon * &source.c;
    let decoder_noise = match opts.decoder_noise {
        DecoderNoise::ChannelConsistent => operators.decompress.congruence(&operators.channel_noise_cov()),
        DecoderNoise::UnitChannel => operators.decompress.congruence(&Matrix::identity(source.obs_dim())),
    };
    let m = (&(&effective_obs.congruence(sigma) + &recon.congruence(&source.obs_noise_cov()))
        + &operators.basis.congruence(&decoder_noise))
        .symmetrized();
    let m_pinv = sym_pinv(&m, PINV_REL_TOL)?;

    let a_sigma = &source.a * sigma;
    let gain = &(&a_sigma * &effective_obs.transpose()) * &m_pinv;
    let correction = &(&gain * &effective_obs) * &a_sigma.transpose();
    let sigma_next = (&(&source.a.congruence(sigma) - &correction) + &source.process_cov()).symmetrized();

    let scale = sigma_next.max_abs().max(1.0);
    let min_eig = *sym_eig(&sigma_next, DEFAULT_EIG_TOL)?.values.last().unwrap_or(&0.0);
    if min_eig < -PSD_TOL * scale {
        return Err(FilterError::NotPsd(min_eig));
    }

    Ok(Stage {
        sigma: sigma.clone(),
        innovations_cov: lambda_mat,
        operators,
        effective_obs,
        m,
        gain,
        sigma_next,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarySolution {
    pub sigma_inf: Matrix,
    pub lambda_inf: Vector,
    pub stage: Stage,
    pub rate_nats: f64,
    pub power: f64,
    pub distortion: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Whether oscillation forced the averaged update `Σ ← (Σ_new + Σ)/2`.
    pub damped: bool,
}

impl StationarySolution {
    pub fn operators(&self) -> &RealizationOperators {
        &self.stage.operators
    }

    /// Capacity of the matched channel at the fixed point.
    pub fn capacity_nats(&self) -> f64 {
        self.stage.operators.capacity_nats(&self.stage.innovations_cov)
    }
}

/// Iterates [`riccati_step`] from `Σ_0 = x0_cov` to its fixed point.
pub fn stationary_solution(
    source: &GaussMarkovSource,
    budget: f64,
    opts: &FilterOptions,
) -> Result<StationarySolution, FilterError> {
    source.check_shapes()?;
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(FilterError::Waterfill(WaterfillError::Budget(budget)));
    }
    let mut sigma = source.x0_cov.symmetrized();
    let mut residual = f64::INFINITY;
    let mut rising_streak = 0;
    let mut damped = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let stage = riccati_step(source, &sigma, budget, opts)?;
        let mut next = stage.sigma_next;
        if damped {
            next = (&next + &sigma).scale(0.5);
        }
        let r = next.max_abs_diff(&sigma);
        if !r.is_finite() {
            return Err(FilterError::NotConverged { iterations, residual: r });
        }
        rising_streak = if r >= residual { rising_streak + 1 } else { 0 };
        if rising_streak >= OSCILLATION_WINDOW && !damped {
            damped = true;
            rising_streak = 0;
        }
        residual = r;
        sigma = next;
        if residual < opts.tol {
            break;
        }
    }
    if !(residual < opts.tol) {
        return Err(FilterError::NotConverged { iterations, residual });
    }
    let stage = riccati_step(source, &sigma, budget, opts)?;
    let ops = &stage.operators;
    Ok(StationarySolution {
        lambda_inf: ops.allocation.lambda.clone(),
        rate_nats: ops.allocation.rate_nats,
        power: ops.power(),
        distortion: ops.allocation.total_distortion,
        sigma_inf: sigma,
        stage,
        iterations,
        residual,
        damped,
    })
}

/// Zero-rate stationary covariance: the fixed point of `Σ = AΣAᵀ + BBᵀ`.
pub fn open_loop_covariance(source: &GaussMarkovSource, tol: f64, max_iter: usize) -> Result<Matrix, FilterError> {
    let bb = source.process_cov();
    let mut sigma = Matrix::zeros(source.state_dim(), source.state_dim());
    for iterations in 1..=max_iter {
        let next = (&source.a.congruence(&sigma) + &bb).symmetrized();
        let r = next.max_abs_diff(&sigma);
        sigma = next;
        if !r.is_finite() {
            return Err(FilterError::NotConverged { iterations, residual: r });
        }
        if r < tol * sigma.max_abs().max(1.0) {
            return Ok(sigma);
        }
    }
    Err(FilterError::NotConverged {
        iterations: max_iter,
        residual: f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterState {
    pub xhat: Vector,
    pub sigma: Matrix,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutput {
    /// `Ỹ_t`.
    pub reconstruction: Vector,
    /// `A_t = 𝒜 Vᵀ K_t`.
    pub channel_input: Vector,
    /// `B_t = A_t + Z_t`.
    pub channel_output: Vector,
}

/// Encoder → channel → decoder → filter for one observation, with the
/// channel noise `Z_t` supplied by the caller.
pub fn end_to_end_step_with_noise(
    source: &GaussMarkovSource,
    observation: &[f64],
    filter: &mut FilterState,
    stage: &Stage,
    channel_noise: &[f64],
) -> StepOutput {
    let ops = &stage.operators;
    let prediction = source.c.matvec(&filter.xhat);
    let innovation = sub_vec(observation, &prediction);
    let gamma = ops.basis.transpose().matvec(&innovation);
    let channel_input = ops.compress.matvec(&gamma);
    let channel_output: Vector = channel_input.iter().zip(channel_noise).map(|(a, z)| a + z).collect();
    let gamma_hat = ops.decompress.matvec(&channel_output);
    let innovation_hat = ops.basis.matvec(&gamma_hat);
    let reconstruction: Vector = innovation_hat.iter().zip(&prediction).map(|(k, c)| k + c).collect();

    let correction = stage.gain.matvec(&innovation_hat);
    filter.xhat = source.a.matvec(&filter.xhat).iter().zip(correction).map(|(a, g)| a + g).collect();
    filter.sigma = stage.sigma_next.clone();
    filter.t += 1;

    StepOutput {
        reconstruction,
        channel_input,
        channel_output,
    }
}

/// [`end_to_end_step_with_noise`] with `Z_t ~ N(0, Q)` drawn from `rng`.
pub fn end_to_end_step(
    source: &GaussMarkovSource,
    observation: &[f64],
    filter: &mut FilterState,
    stage: &Stage,
    rng: &mut SimRng,
) -> StepOutput {
    let q = &stage.operators.channel_noise;
    let z: Vector = q.iter().map(|v| v.sqrt() * rng.standard_normal()).collect();
    end_to_end_step_with_noise(source, observation, filter, stage, &z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub distortion: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub steps: Vec<StepRecord>,
    pub target_distortion: f64,
    pub predicted_power: f64,
    pub empirical_distortion: f64,
    pub distortion_se: f64,
    pub empirical_power: f64,
    pub power_se: f64,
}

impl SimulationReport {
    pub fn relative_distortion_error(&self) -> f64 {
        (self.empirical_distortion - self.target_distortion).abs() / self.target_distortion
    }
}

/// Batches used for the batch-means standard error (samples are serially
/// correlated through the filter).
pub const SE_BATCHES: usize = 50;

/// Mean and batch-means standard error.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 * SE_BATCHES {
        if n < 2 {
            return (mean, f64::NAN);
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        return (mean, (var / n as f64).sqrt());
    }
    let size = n / SE_BATCHES;
    let batch_means: Vec<f64> = (0..SE_BATCHES)
        .map(|b| samples[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = batch_means.iter().sum::<f64>() / SE_BATCHES as f64;
    let var = batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (SE_BATCHES - 1) as f64;
    (mean, (var / SE_BATCHES as f64).sqrt())
}

/// Runs the stationary pipeline for `steps` samples.
///
/// The filter starts at `X̂_0 = x̄_0` with `X_0 ~ N(x̄_0, Σ∞)`, so the
/// estimation error is stationary from the first step.
pub fn simulate_pipeline(
    source: &GaussMarkovSource,
    stationary: &StationarySolution,
    steps: usize,
    seed: u64,
) -> Result<SimulationReport, FilterError> {
    if steps == 0 {
        return Err(FilterError::Domain("simulation needs at least one step".into()));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let sigma_sqrt = psd_sqrt(&stationary.sigma_inf)?;
    let mut x = gaussian_sample(&mut rng, &source.x0_mean, &sigma_sqrt)?;
    let mut filter = FilterState {
        xhat: source.x0_mean.clone(),
        sigma: stationary.sigma_inf.clone(),
        t: 0,
    };
    let stage = &stationary.stage;
    let mut records = Vec::with_capacity(steps);
    for t in 0..steps {
        let y = gaussian_sample(&mut rng, &source.c.matvec(&x), &source.n)?;
        let out = end_to_end_step(source, &y, &mut filter, stage, &mut rng);
        records.push(StepRecord {
            t,
            distortion: norm_sq(&sub_vec(&y, &out.reconstruction)),
            power: norm_sq(&out.channel_input),
        });
        x = gaussian_sample(&mut rng, &source.a.matvec(&x), &source.b)?;
    }
    let (empirical_distortion, distortion_se) = mean_and_se(&records.iter().map(|r| r.distortion).collect::<Vec<_>>());
    let (empirical_power, power_se) = mean_and_se(&records.iter().map(|r| r.power).collect::<Vec<_>>());
    Ok(SimulationReport {
        steps: records,
        target_distortion: stationary.distortion,
        predicted_power: stationary.power,
        empirical_distortion,
        distortion_se,
        empirical_power,
        power_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent scalar fixed point computed before the build (plain
    // iteration of the scalar recursion in double precision).
    const SCALAR_SIGMA_INF: f64 = 1.407348113478887;
    const SCALAR_RATE: f64 = 0.5209673902268631;
    const SCALAR_POWER: f64 = 1.834696226957774;

    fn scalar() -> GaussMarkovSource {
        GaussMarkovSource::scalar(0.9, 1.0, 1.0, 0.1)
    }

    #[test]
    fn innovations_examples() {
        let s = GaussMarkovSource::new(
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::identity(2),
            vec![0.0; 2],
            Matrix::zeros(2, 2),
        )
        .unwrap();
        assert_eq!(innovations_covariance(&s, &Matrix::zeros(2, 2)).unwrap(), Matrix::identity(2));

        let l = innovations_covariance(&scalar(), &Matrix::from_diag(&[5.0])).unwrap();
        assert!((l[(0, 0)] - 5.01).abs() < 1e-14);

        let s = GaussMarkovSource::new(
            Matrix::identity(2),
            Matrix::identity(2),
            Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            Matrix::from_diag(&[0.5]),
            vec![0.0; 2],
            Matrix::zeros(2, 2),
        )
        .unwrap();
        let l = innovations_covariance(&s, &Matrix::from_diag(&[2.0, 3.0])).unwrap();
        assert!((l[(0, 0)] - 2.25).abs() < 1e-14);
    }

    #[test]
    fn singular_observation_noise_is_rejected() {
        let s = GaussMarkovSource::scalar(0.9, 1.0, 1.0, 0.0);
        assert!(matches!(
            innovations_covariance(&s, &Matrix::zeros(1, 1)),
            Err(FilterError::InnovationsNotPd(_))
        ));
    }

    #[test]
    fn operators_examples() {
        let a = reverse_waterfill(&[4.0, 1.0], 5.0).unwrap();
        let ops = build_operators(&a, &Matrix::identity(2), &[1.0, 1.0]).unwrap();
        assert_eq!(ops.compress, Matrix::zeros(2, 2));
        assert_eq!(ops.decompress, Matrix::zeros(2, 2));

        let a = reverse_waterfill(&[1.0, 1.0], 1.0).unwrap();
        let ops = build_operators(&a, &Matrix::identity(2), &[1.0, 1.0]).unwrap();
        assert_eq!(ops.compress, Matrix::identity(2));
        assert_eq!(ops.decompress, Matrix::from_diag(&[0.5, 0.5]));
        assert_eq!(&ops.decompress * &ops.compress, ops.gains());

        let a = reverse_waterfill(&[4.0, 1.0], 2.0).unwrap();
        let ops = build_operators(&a, &Matrix::identity(2), &[2.0, 2.0]).unwrap();
        assert!((ops.compress[(0, 0)] - 1.5f64.sqrt()).abs() < 1e-15);
        assert!((ops.decompress[(0, 0)] - 0.375f64.sqrt()).abs() < 1e-15);
        assert_eq!(ops.compress[(1, 1)], 0.0);
        assert_eq!(ops.decompress[(1, 1)], 0.0);

        assert!(matches!(
            build_operators(&a, &Matrix::identity(2), &[1.0, 0.0]),
            Err(FilterError::ChannelNoise { index: 1, .. })
        ));
    }

    #[test]
    fn zero_rate_step_is_pure_prediction() {
        // Σ = 0: Λ = 0.01 ≤ D, so nothing is sent and Σ' = a²·0 + b² = 1.
        let stage = riccati_step(&scalar(), &Matrix::zeros(1, 1), 0.5, &FilterOptions::unit_channel(1)).unwrap();
        assert!((stage.innovations_cov[(0, 0)] - 0.01).abs() < 1e-15);
        assert_eq!(stage.operators.allocation.eta, vec![0.0]);
        assert!((stage.sigma_next[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_fixed_point_matches_oracle() {
        let sol = stationary_solution(&scalar(), 0.5, &FilterOptions::unit_channel(1)).unwrap();
        assert!((sol.sigma_inf[(0, 0)] - SCALAR_SIGMA_INF).abs() < 1e-12);
        assert!((sol.rate_nats - SCALAR_RATE).abs() < 1e-12);
        assert!((sol.power - SCALAR_POWER).abs() < 1e-11);
        assert!((sol.capacity_nats() - sol.rate_nats).abs() < 1e-12);

        let again = riccati_step(&scalar(), &sol.sigma_inf, 0.5, &FilterOptions::unit_channel(1)).unwrap();
        assert!(again.sigma_next.max_abs_diff(&sol.sigma_inf) < 1e-11);
    }

    #[test]
    fn large_budget_gives_lyapunov_limit() {
        let s = scalar();
        let sol = stationary_solution(&s, 100.0, &FilterOptions::unit_channel(1)).unwrap();
        assert_eq!(sol.rate_nats, 0.0);
        assert!((sol.sigma_inf[(0, 0)] - 1.0 / (1.0 - 0.81)).abs() < 1e-10);
        let lyap = open_loop_covariance(&s, 1e-14, 100_000).unwrap();
        assert!((lyap[(0, 0)] - sol.sigma_inf[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn printed_decoder_noise_agrees_for_unit_channel() {
        let mut opts = FilterOptions::unit_channel(1);
        let a = stationary_solution(&scalar(), 0.5, &opts).unwrap();
        opts.decoder_noise = DecoderNoise::UnitChannel;
        let b = stationary_solution(&scalar(), 0.5, &opts).unwrap();
        assert!(a.sigma_inf.max_abs_diff(&b.sigma_inf) < 1e-14);
    }

    #[test]
    fn noiseless_channel_reconstructs_gain_times_innovation() {
        let sol = stationary_solution(&scalar(), 0.5, &FilterOptions::unit_channel(1)).unwrap();
        let mut f = FilterState {
            xhat: vec![0.3],
            sigma: sol.sigma_inf.clone(),
            t: 0,
        };
        let y = [1.7];
        let out = end_to_end_step_with_noise(&scalar(), &y, &mut f, &sol.stage, &[0.0]);
        let eta = sol.operators().allocation.eta[0];
        assert!((out.reconstruction[0] - 0.3 - eta * (1.7 - 0.3)).abs() < 1e-14);
        assert_eq!(out.channel_input, out.channel_output);
        assert_eq!(f.t, 1);
    }

    #[test]
    fn nothing_sent_reconstructs_prediction() {
        let sol = stationary_solution(&scalar(), 100.0, &FilterOptions::unit_channel(1)).unwrap();
        let mut f = FilterState {
            xhat: vec![0.3],
            sigma: sol.sigma_inf.clone(),
            t: 0,
        };
        let mut rng = SimRng::seed_from_u64(5);
        let out = end_to_end_step(&scalar(), &[2.0], &mut f, &sol.stage, &mut rng);
        assert_eq!(out.reconstruction, vec![0.3]);
        assert_eq!(out.channel_input, vec![0.0]);
        assert!((f.xhat[0] - 0.27).abs() < 1e-15);
    }

    #[test]
    fn nothing_sent_distortion_is_trace_lambda() {
        let s = scalar();
        let sol = stationary_solution(&s, 100.0, &FilterOptions::unit_channel(1)).unwrap();
        let rep = simulate_pipeline(&s, &sol, 100_000, 11).unwrap();
        let trace = sol.stage.innovations_cov.trace();
        assert!((rep.empirical_distortion - trace).abs() < 4.0 * rep.distortion_se);
        assert_eq!(rep.empirical_power, 0.0);
    }

    #[test]
    fn scalar_pipeline_hits_target() {
        let s = scalar();
        let sol = stationary_solution(&s, 0.5, &FilterOptions::unit_channel(1)).unwrap();
        let rep = simulate_pipeline(&s, &sol, 100_000, 2024).unwrap();
        assert!((rep.empirical_distortion - 0.5).abs() < 3.0 * rep.distortion_se, "{rep:?}");
        assert!((rep.empirical_power - sol.power).abs() < 3.0 * rep.power_se);
    }

    #[test]
    fn undetectable_unstable_source_does_not_converge() {
        let s = GaussMarkovSource::scalar(1.2, 1.0, 0.0, 1.0);
        let opts = FilterOptions {
            max_iter: 500,
            ..FilterOptions::unit_channel(1)
        };
        assert!(matches!(
            stationary_solution(&s, 0.5, &opts),
            Err(FilterError::NotConverged { .. })
        ));
    }

    #[test]
    fn batch_means_se() {
        let (m, se) = mean_and_se(&[1.0; 1000]);
        assert_eq!(m, 1.0);
        assert_eq!(se, 0.0);
        let (m, _) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
    }
}
