//! Replicated simulation experiments against the limiting theory.
//!
//! Each runner draws observations under the null and/or planted model,
//! evaluates the log-likelihood ratio or posterior overlaps per replicate,
//! and aggregates against the closed-form limits. Replicates are
//! distributed over the rayon pool with per-replicate derived seeds and
//! merged in index order, so results are independent of thread count.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::detection::{self, DetectionError};
use crate::prior::Prior;
use crate::rng::derive_seed;
use crate::sim::{
    log_lr_exact, log_lr_mc, overlap_moments, sample_observation, GibbsParams, LogLrEstimate,
    OverlapMethod, SimError,
};
use crate::threshold::{reconstruction_threshold, ThresholdError, DEFAULT_Q_TOL};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("lambda {lambda} is not below the reconstruction threshold {lambda_c}; the limiting law does not apply")]
    NotBelowThreshold { lambda: f64, lambda_c: f64 },

    #[error("lambda {lambda} is not above the reconstruction threshold {lambda_c}; the sign test does not apply")]
    NotAboveThreshold { lambda: f64, lambda_c: f64 },

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error(transparent)]
    Threshold(#[from] ThresholdError),

    #[error(transparent)]
    Detection(#[from] DetectionError),
}

/// Which estimator computes `log L` per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LrEstimator {
    Exact,
    Mc,
}

/// One experiment specification: prior, signal strength, system sizes,
/// replication and estimator choices. `sigma = +inf` discards diagonals.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub prior: Prior,
    pub lambda: f64,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub lr_method: LrEstimator,
    pub mc_samples: u64,
    pub sigma: f64,
    pub enumeration_cap: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replicates < 1 {
            return Err(ExperimentError::InvalidConfig(
                "replicates must be at least 1".into(),
            ));
        }
        if self.n_list.is_empty() {
            return Err(ExperimentError::InvalidConfig("empty n list".into()));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 2) {
            return Err(ExperimentError::InvalidConfig(format!(
                "system size {n} below minimum 2"
            )));
        }
        // Every experiment compares two hypotheses, so the planted side
        // needs an actual signal.
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(ExperimentError::InvalidConfig(format!(
                "lambda {} must be finite and positive",
                self.lambda
            )));
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(ExperimentError::InvalidConfig(format!(
                "sigma {} must be positive or infinite",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Additional check for the runners that evaluate log L per replicate:
    /// exact enumeration must fit under the cap. Overlap runs pick their
    /// own method and enforce the cap inside `overlap_moments`.
    fn validate_lr_cap(&self) -> Result<(), ExperimentError> {
        if self.lr_method == LrEstimator::Exact {
            for &n in &self.n_list {
                let configs = (self.prior.num_atoms() as u128).saturating_pow(n as u32);
                if configs > self.enumeration_cap as u128 {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "exact enumeration needs {configs} configurations at n = {n}, cap is {}",
                        self.enumeration_cap
                    )));
                }
            }
        }
        Ok(())
    }

    /// The single system size used by the log-LR experiments.
    fn primary_n(&self) -> usize {
        self.n_list[0]
    }
}

/// Empirical location/scale of a per-replicate statistic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleStats {
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean.
    pub std_error: f64,
}

fn sample_stats(values: &[f64]) -> SampleStats {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    SampleStats {
        mean,
        variance,
        std_error: (variance / m).sqrt(),
    }
}

/// Kolmogorov-Smirnov distance between `samples` and `N(mean, variance)`.
fn ks_statistic(samples: &[f64], mean: f64, variance: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = variance.sqrt();
    let m = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = 0.5 * libm::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2));
        let lo = i as f64 / m;
        let hi = (i + 1) as f64 / m;
        d = d.max((cdf - lo).abs()).max((cdf - hi).abs());
    }
    d
}

/// Per-replicate log-LR under one hypothesis, parallel over replicates.
/// `hypothesis_stream` separates the null and planted seed streams.
fn log_lr_replicates(
    config: &ExperimentConfig,
    n: usize,
    lambda_true: f64,
    hypothesis_stream: u64,
) -> Result<Vec<f64>, ExperimentError> {
    (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let obs_seed = derive_seed(config.seed, hypothesis_stream + 4 * r as u64);
            let mc_seed = derive_seed(config.seed, hypothesis_stream + 4 * r as u64 + 1);
            let (obs, _) =
                sample_observation(&config.prior, n, lambda_true, config.sigma, obs_seed)?;
            let est: LogLrEstimate = match config.lr_method {
                LrEstimator::Exact => {
                    log_lr_exact(&obs, config.lambda, &config.prior, config.enumeration_cap)?
                }
                LrEstimator::Mc => log_lr_mc(
                    &obs,
                    config.lambda,
                    &config.prior,
                    config.mc_samples,
                    mc_seed,
                )?,
            };
            Ok(est.value)
        })
        .collect()
}

/// Empirical law of `log L` under both hypotheses against the limiting
/// Gaussian `N(+-mu, 2 mu)`.
#[derive(Debug, Clone, Serialize)]
pub struct CltResult {
    pub n: usize,
    pub replicates: usize,
    pub theory_mu: f64,
    pub theory_variance: f64,
    pub null: SampleStats,
    pub alt: SampleStats,
    /// `(empirical mean - theory mean) / SE`, per hypothesis.
    pub z_null: f64,
    pub z_alt: f64,
    pub ks_null: f64,
    pub ks_alt: f64,
}

/// Samples `replicates` observations under each hypothesis, computes
/// `log L(Y; lambda)` for each, and compares with the limiting law. Only
/// valid below the reconstruction threshold.
pub fn run_clt(config: &ExperimentConfig) -> Result<CltResult, ExperimentError> {
    config.validate()?;
    config.validate_lr_cap()?;
    let lambda_c = reconstruction_threshold(&config.prior, DEFAULT_Q_TOL)?.lambda_c;
    if config.lambda >= lambda_c {
        return Err(ExperimentError::NotBelowThreshold {
            lambda: config.lambda,
            lambda_c,
        });
    }

    let n = config.primary_n();
    let nulls = log_lr_replicates(config, n, 0.0, 0)?;
    let alts = log_lr_replicates(config, n, config.lambda, 2)?;

    let mu = if config.sigma.is_finite() {
        detection::mu_with_diagonal(&config.prior, config.lambda, config.sigma)?
    } else {
        detection::mu(config.lambda)?
    };
    let theory_variance = 2.0 * mu;
    let null = sample_stats(&nulls);
    let alt = sample_stats(&alts);
    Ok(CltResult {
        n,
        replicates: config.replicates,
        theory_mu: mu,
        theory_variance,
        z_null: (null.mean + mu) / null.std_error,
        z_alt: (alt.mean - mu) / alt.std_error,
        ks_null: ks_statistic(&nulls, -mu, theory_variance),
        ks_alt: ks_statistic(&alts, mu, theory_variance),
        null,
        alt,
    })
}

/// Empirical error rates of the likelihood-ratio test (reject when
/// `log L > 0`) against the optimal-test limit.
#[derive(Debug, Clone, Serialize)]
pub struct TestErrorResult {
    pub n: usize,
    pub replicates: usize,
    /// Fraction of null replicates rejected.
    pub type_i: f64,
    /// Fraction of planted replicates accepted.
    pub type_ii: f64,
    pub total: f64,
    pub theory_total: f64,
    pub theory_per_type: f64,
}

pub fn run_test_error(config: &ExperimentConfig) -> Result<TestErrorResult, ExperimentError> {
    config.validate()?;
    config.validate_lr_cap()?;
    let lambda_c = reconstruction_threshold(&config.prior, DEFAULT_Q_TOL)?.lambda_c;
    if config.lambda >= lambda_c {
        return Err(ExperimentError::NotBelowThreshold {
            lambda: config.lambda,
            lambda_c,
        });
    }

    let n = config.primary_n();
    let nulls = log_lr_replicates(config, n, 0.0, 0)?;
    let alts = log_lr_replicates(config, n, config.lambda, 2)?;
    let m = config.replicates as f64;
    let type_i = nulls.iter().filter(|&&v| v > 0.0).count() as f64 / m;
    let type_ii = alts.iter().filter(|&&v| v <= 0.0).count() as f64 / m;
    Ok(TestErrorResult {
        n,
        replicates: config.replicates,
        type_i,
        type_ii,
        total: type_i + type_ii,
        theory_total: detection::optimal_error(config.lambda)?,
        theory_per_type: detection::per_type_error_limit(config.lambda)?,
    })
}

/// Sign statistics of `log L / n` above the reconstruction threshold,
/// where the models are asymptotically orthogonal.
#[derive(Debug, Clone, Serialize)]
pub struct StrongDetectionResult {
    pub n: usize,
    pub replicates: usize,
    /// Fraction of null replicates with `log L / n <= 0`.
    pub correct_sign_null: f64,
    /// Fraction of planted replicates with `log L / n > 0`.
    pub correct_sign_alt: f64,
    /// Empirical mean of `log L / n` under each hypothesis (reported, not
    /// gated; the null-side limit has no closed form).
    pub mean_normalized_null: f64,
    pub mean_normalized_alt: f64,
}

pub fn run_strong_detection(
    config: &ExperimentConfig,
) -> Result<StrongDetectionResult, ExperimentError> {
    config.validate()?;
    config.validate_lr_cap()?;
    let lambda_c = reconstruction_threshold(&config.prior, DEFAULT_Q_TOL)?.lambda_c;
    if config.lambda <= lambda_c {
        return Err(ExperimentError::NotAboveThreshold {
            lambda: config.lambda,
            lambda_c,
        });
    }

    let n = config.primary_n();
    let nulls = log_lr_replicates(config, n, 0.0, 0)?;
    let alts = log_lr_replicates(config, n, config.lambda, 2)?;
    let m = config.replicates as f64;
    let nf = n as f64;
    Ok(StrongDetectionResult {
        n,
        replicates: config.replicates,
        correct_sign_null: nulls.iter().filter(|&&v| v <= 0.0).count() as f64 / m,
        correct_sign_alt: alts.iter().filter(|&&v| v > 0.0).count() as f64 / m,
        mean_normalized_null: nulls.iter().sum::<f64>() / (m * nf),
        mean_normalized_alt: alts.iter().sum::<f64>() / (m * nf),
    })
}

/// Overlap-moment scaling for one system size, pooled over replicates.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapScalingRow {
    pub n: usize,
    pub replicates: usize,
    pub e_r1star_sq: f64,
    pub se_r1star_sq: f64,
    pub e_r1star_4: f64,
    pub e_r12_sq: f64,
    pub se_r12_sq: f64,
    /// `n (1 - lambda) E<R_{1,*}^2>`; approaches 1 from the cavity relation.
    pub scaled_second: f64,
    /// `n^2 E<R_{1,*}^4>`; bounded in n.
    pub scaled_fourth: f64,
    /// `|E<R_{1,2}^2> - E<R_{1,*}^2>|`, with its pooled standard error.
    pub nishimori_gap: f64,
    pub nishimori_gap_se: f64,
}

/// Runs planted-model overlap measurements for each system size in
/// `config.n_list`.
pub fn run_overlap(
    config: &ExperimentConfig,
    method: OverlapMethod,
) -> Result<Vec<OverlapScalingRow>, ExperimentError> {
    config.validate()?;
    let lambda_c = reconstruction_threshold(&config.prior, DEFAULT_Q_TOL)?.lambda_c;
    if config.lambda >= lambda_c {
        return Err(ExperimentError::NotBelowThreshold {
            lambda: config.lambda,
            lambda_c,
        });
    }

    let mut rows = Vec::with_capacity(config.n_list.len());
    for (ni, &n) in config.n_list.iter().enumerate() {
        let per_replicate: Result<Vec<_>, ExperimentError> = (0..config.replicates)
            .into_par_iter()
            .map(|r| {
                let stream = (ni * config.replicates + r) as u64;
                let obs_seed = derive_seed(config.seed, 1_000_003 + 2 * stream);
                let (obs, spike) =
                    sample_observation(&config.prior, n, config.lambda, config.sigma, obs_seed)?;
                let spike = spike.expect("lambda > 0 was validated");
                let gibbs = GibbsParams {
                    seed: derive_seed(config.seed, 1_000_003 + 2 * stream + 1),
                    ..GibbsParams::default()
                };
                let stats = overlap_moments(
                    &obs,
                    &spike,
                    config.lambda,
                    &config.prior,
                    method,
                    config.enumeration_cap,
                    gibbs,
                )?;
                Ok(stats)
            })
            .collect();
        let per_replicate = per_replicate?;

        let r1sq: Vec<f64> = per_replicate.iter().map(|s| s.e_r1star_sq).collect();
        let r14: Vec<f64> = per_replicate.iter().map(|s| s.e_r1star_4).collect();
        let r12sq: Vec<f64> = per_replicate.iter().map(|s| s.e_r12_sq).collect();
        let gaps: Vec<f64> = per_replicate
            .iter()
            .map(|s| s.e_r12_sq - s.e_r1star_sq)
            .collect();
        let s1 = sample_stats(&r1sq);
        let s4 = sample_stats(&r14);
        let s12 = sample_stats(&r12sq);
        let gap = sample_stats(&gaps);
        rows.push(OverlapScalingRow {
            n,
            replicates: config.replicates,
            e_r1star_sq: s1.mean,
            se_r1star_sq: s1.std_error,
            e_r1star_4: s4.mean,
            e_r12_sq: s12.mean,
            se_r12_sq: s12.std_error,
            scaled_second: n as f64 * (1.0 - config.lambda) * s1.mean,
            scaled_fourth: (n as f64) * (n as f64) * s4.mean,
            nishimori_gap: gap.mean.abs(),
            nishimori_gap_se: gap.std_error,
        });
    }
    Ok(rows)
}
