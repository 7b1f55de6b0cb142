//! Experiment configuration: JSON file plus command-line overrides.
//!
//! Precedence is flag > config file > default. The prior accepts the
//! shorthand `rademacher`, `sparse:<rho>`, inline JSON
//! `{"atoms": [...], "weights": [...]}`, or a path to a JSON file with the
//! same shape.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use spiked_limits::experiments::{ExperimentConfig, LrEstimator};
use spiked_limits::prior::Prior;
use spiked_limits::sim::{OverlapMethod, DEFAULT_ENUMERATION_CAP};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub prior: Option<serde_json::Value>,
    pub lambda: Option<f64>,
    pub n: Option<serde_json::Value>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub method: Option<String>,
    pub mc_samples: Option<u64>,
    pub sigma: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::domain(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::domain(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flags shared by the experiment subcommands.
#[derive(Debug, clap::Args)]
pub struct ExperimentArgs {
    /// JSON config file; any flag below overrides its fields
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,

    /// Prior: `rademacher`, `sparse:<rho>`, inline JSON, or a file path
    #[arg(long)]
    pub prior: Option<String>,

    /// Signal-to-noise ratio the likelihood ratio is evaluated at
    #[arg(long)]
    pub lambda: Option<f64>,

    /// System size(s); comma-separated for a size sweep
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,

    /// Replicates per hypothesis
    #[arg(long)]
    pub replicates: Option<usize>,

    /// Master seed; every derived RNG stream is a pure function of it
    #[arg(long)]
    pub seed: Option<u64>,

    /// Log-LR estimator: `exact` (enumeration) or `mc`
    #[arg(long)]
    pub method: Option<String>,

    /// Sample count for the `mc` estimator
    #[arg(long)]
    pub mc_samples: Option<u64>,

    /// Diagonal noise level; omit for the diagonal-free model
    #[arg(long)]
    pub sigma: Option<f64>,

    /// CSV output path
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

pub fn parse_prior(spec: &str) -> Result<Prior, CliError> {
    if spec == "rademacher" {
        return Ok(Prior::rademacher());
    }
    if let Some(rho) = spec.strip_prefix("sparse:") {
        let rho: f64 = rho
            .parse()
            .map_err(|_| CliError::domain(format!("bad sparsity in prior spec `{spec}`")))?;
        return Prior::sparse_rademacher(rho)
            .map_err(|e| CliError::domain(format!("invalid prior: {e}")));
    }
    if spec.trim_start().starts_with('{') {
        return serde_json::from_str(spec)
            .map_err(|e| CliError::domain(format!("invalid inline prior JSON: {e}")));
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| CliError::domain(format!("cannot read prior file {spec}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::domain(format!("invalid prior file {spec}: {e}")))
}

fn prior_from_value(v: &serde_json::Value) -> Result<Prior, CliError> {
    match v {
        serde_json::Value::String(s) => parse_prior(s),
        other => serde_json::from_value(other.clone())
            .map_err(|e| CliError::domain(format!("invalid prior in config: {e}"))),
    }
}

fn n_list_from_value(v: &serde_json::Value) -> Result<Vec<usize>, CliError> {
    match v {
        serde_json::Value::Number(x) => x
            .as_u64()
            .map(|n| vec![n as usize])
            .ok_or_else(|| CliError::domain("n must be a positive integer".into())),
        serde_json::Value::Array(_) => serde_json::from_value(v.clone())
            .map_err(|e| CliError::domain(format!("invalid n list: {e}"))),
        _ => Err(CliError::domain("n must be an integer or a list".into())),
    }
}

fn method_from_str(s: &str) -> Result<LrEstimator, CliError> {
    match s {
        "exact" => Ok(LrEstimator::Exact),
        "mc" => Ok(LrEstimator::Mc),
        other => Err(CliError::domain(format!(
            "unknown method `{other}` (expected exact|mc)"
        ))),
    }
}

pub fn overlap_method_from_str(s: &str) -> Result<OverlapMethod, CliError> {
    match s {
        "exact" => Ok(OverlapMethod::Exact),
        "gibbs" => Ok(OverlapMethod::Gibbs),
        other => Err(CliError::domain(format!(
            "unknown overlap method `{other}` (expected exact|gibbs)"
        ))),
    }
}

impl ExperimentArgs {
    /// Resolves file + flags + defaults into a full config.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };

        let prior = match (&self.prior, &file.prior) {
            (Some(s), _) => parse_prior(s)?,
            (None, Some(v)) => prior_from_value(v)?,
            (None, None) => return Err(CliError::domain("no prior given (flag or config)".into())),
        };
        let lambda = self
            .lambda
            .or(file.lambda)
            .ok_or_else(|| CliError::domain("no lambda given (flag or config)".into()))?;
        let n_list = match (&self.n, &file.n) {
            (Some(ns), _) => ns.clone(),
            (None, Some(v)) => n_list_from_value(v)?,
            (None, None) => vec![10],
        };
        let method = match (&self.method, &file.method) {
            (Some(s), _) => method_from_str(s)?,
            (None, Some(s)) => method_from_str(s)?,
            (None, None) => LrEstimator::Exact,
        };

        Ok(ExperimentConfig {
            prior,
            lambda,
            n_list,
            replicates: self.replicates.or(file.replicates).unwrap_or(100),
            seed: self.seed.or(file.seed).unwrap_or(1),
            lr_method: method,
            mc_samples: self.mc_samples.or(file.mc_samples).unwrap_or(100_000),
            sigma: self.sigma.or(file.sigma).unwrap_or(f64::INFINITY),
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        })
    }
}
