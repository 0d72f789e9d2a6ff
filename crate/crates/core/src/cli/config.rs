use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::causal_filter::{DecoderNoise, FilterOptions, DEFAULT_RICCATI_MAX_ITER, DEFAULT_RICCATI_TOL};
use crate::kernel::{KernelOptions, UpdateRule};
use crate::numerics::Matrix;
use crate::source_model::{FiniteSource, GaussMarkovSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RateUnit {
    #[default]
    Nats,
    Bits,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<String>,
    pub source: SourceConfig,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum SourceConfig {
    #[serde(rename = "gauss_markov")]
    GaussMarkov(GaussConfig),
    #[serde(rename = "finite")]
    Finite(FiniteConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub n: Vec<Vec<f64>>,
    #[serde(default)]
    pub x0_mean: Option<Vec<f64>>,
    #[serde(default)]
    pub x0_cov: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteConfig {
    /// Law of the first letter.
    pub pmf: Vec<f64>,
    /// Row-stochastic transition matrix; omitted means i.i.d. letters.
    #[serde(default)]
    pub transition: Option<Vec<Vec<f64>>>,
    /// `|𝒳| × |𝒴|` single-letter distortion.
    pub distortion: Vec<Vec<f64>>,
    /// Number of letters `n + 1`.
    pub horizon: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(rename = "D", default)]
    pub d: Option<f64>,
    #[serde(rename = "D_grid", default)]
    pub d_grid: Option<Vec<f64>>,
    #[serde(rename = "R", default)]
    pub r: Option<f64>,
    /// Diagonal of the channel noise covariance.
    #[serde(rename = "Q", default)]
    pub q: Option<Vec<f64>>,
    #[serde(rename = "T", default)]
    pub t: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub rate_unit: Option<RateUnit>,
    #[serde(default)]
    pub decoder_noise: Option<String>,
    #[serde(default)]
    pub update_rule: Option<String>,
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    Matrix::from_rows(rows).map_err(|e| CliError::Config(format!("{name}: {e}")))
}

impl RunConfig {
    pub fn gauss_markov(&self) -> Result<GaussMarkovSource, CliError> {
        let SourceConfig::GaussMarkov(g) = &self.source else {
            return Err(CliError::Config("this command needs a source.gauss_markov block".into()));
        };
        let a = matrix("A", &g.a)?;
        let m = a.rows();
        let x0_mean = g.x0_mean.clone().unwrap_or_else(|| vec![0.0; m]);
        let x0_cov = match &g.x0_cov {
            Some(rows) => matrix("x0_cov", rows)?,
            None => Matrix::zeros(m, m),
        };
        GaussMarkovSource::new(a, matrix("B", &g.b)?, matrix("C", &g.c)?, matrix("N", &g.n)?, x0_mean, x0_cov)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn finite(&self) -> Result<FiniteSource, CliError> {
        let SourceConfig::Finite(f) = &self.source else {
            return Err(CliError::Config("this command needs a source.finite block".into()));
        };
        let distortion = matrix("distortion", &f.distortion)?;
        let built = match &f.transition {
            Some(t) => FiniteSource::new(f.pmf.clone(), matrix("transition", t)?, distortion, f.horizon),
            None => FiniteSource::iid(f.pmf.clone(), distortion, f.horizon),
        };
        built.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn filter_options(&self, p: usize) -> Result<FilterOptions, CliError> {
        let params = &self.parameters;
        let channel_noise = params.q.clone().unwrap_or_else(|| vec![1.0; p]);
        if channel_noise.len() != p {
            return Err(CliError::Config(format!("Q has {} entries, expected {p}", channel_noise.len())));
        }
        let decoder_noise = match params.decoder_noise.as_deref() {
            None | Some("channel-consistent") => DecoderNoise::ChannelConsistent,
            Some("unit-channel") => DecoderNoise::UnitChannel,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "decoder_noise must be channel-consistent or unit-channel, got {other}"
                )))
            }
        };
        Ok(FilterOptions {
            channel_noise,
            tol: params.tol.unwrap_or(DEFAULT_RICCATI_TOL),
            max_iter: params.max_iter.unwrap_or(DEFAULT_RICCATI_MAX_ITER),
            decoder_noise,
        })
    }

    pub fn kernel_options(&self) -> Result<KernelOptions, CliError> {
        let params = &self.parameters;
        let defaults = KernelOptions::default();
        let rule = match params.update_rule.as_deref() {
            None | Some("cost-to-go") => UpdateRule::CostToGo,
            Some("per-stage") => UpdateRule::PerStage,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "update_rule must be cost-to-go or per-stage, got {other}"
                )))
            }
        };
        Ok(KernelOptions {
            rule,
            tol: params.tol.unwrap_or(defaults.tol),
            max_iter: params.max_iter.unwrap_or(defaults.max_iter),
            ..defaults
        })
    }

    pub fn require_d(&self) -> Result<f64, CliError> {
        self.parameters
            .d
            .ok_or_else(|| CliError::Config("parameters.D is required for this command".into()))
    }

    /// `D_grid` if present, otherwise the single value `D`.
    pub fn distortions(&self) -> Result<Vec<f64>, CliError> {
        match (&self.parameters.d_grid, self.parameters.d) {
            (Some(g), _) => Ok(g.clone()),
            (None, Some(d)) => Ok(vec![d]),
            (None, None) => Err(CliError::Config("parameters.D or parameters.D_grid is required".into())),
        }
    }
}
