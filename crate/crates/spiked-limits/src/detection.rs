//! Closed-form detection limits below the reconstruction threshold.
//!
//! Everything here is driven by the single scalar
//! `mu(lambda) = (-log(1 - lambda) - lambda) / 4`: the log-likelihood ratio
//! is asymptotically `N(+mu, 2 mu)` under the planted model and
//! `N(-mu, 2 mu)` under the null, the KL divergence converges to `mu`, and
//! the optimal-test error to `erfc(sqrt(mu) / 2)`. The formulas are valid
//! strictly below the reconstruction threshold; out-of-range inputs are hard
//! errors rather than NaN.

use serde::Serialize;

use crate::prior::Prior;
use crate::threshold::{reconstruction_threshold, ThresholdError, DEFAULT_Q_TOL};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DetectionError {
    #[error("lambda must lie in [0, 1), got {0}")]
    LambdaOutOfRange(f64),

    #[error("sigma must be positive, got {0}")]
    SigmaOutOfRange(f64),

    #[error("lambda {lambda} is not below the reconstruction threshold {lambda_c}")]
    AboveReconstructionThreshold { lambda: f64, lambda_c: f64 },

    #[error(transparent)]
    Threshold(#[from] ThresholdError),
}

fn check_unit_interval(lambda: f64) -> Result<(), DetectionError> {
    if !(0.0..1.0).contains(&lambda) || !lambda.is_finite() {
        return Err(DetectionError::LambdaOutOfRange(lambda));
    }
    Ok(())
}

/// Limiting mean parameter `(-log(1 - lambda) - lambda) / 4`; the limiting
/// law of the log-likelihood ratio is `N(+mu, 2 mu)` under the planted
/// model and `N(-mu, 2 mu)` under the null. Diverges as `lambda -> 1`.
pub fn mu(lambda: f64) -> Result<f64, DetectionError> {
    check_unit_interval(lambda)?;
    Ok((-(-lambda).ln_1p() - lambda) / 4.0)
}

/// Mean parameter when the diagonal observations are kept with noise level
/// `sigma`: `mu (1 + kappa / sigma^2) + lambda / (2 sigma^2)` with
/// `kappa = E[X^3]^2`. Recovers [`mu`] as `sigma -> infinity`; the limiting
/// law is still `N(+-mu, 2 mu)`.
pub fn mu_with_diagonal(prior: &Prior, lambda: f64, sigma: f64) -> Result<f64, DetectionError> {
    check_unit_interval(lambda)?;
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(DetectionError::SigmaOutOfRange(sigma));
    }
    let kappa = prior.moment(3).powi(2);
    let base = mu(lambda)?;
    Ok(base * (1.0 + kappa / (sigma * sigma)) + lambda / (2.0 * sigma * sigma))
}

/// Limiting total error of the likelihood-ratio test,
/// `erfc(sqrt(mu) / 2)`: the sum of Type-I and Type-II errors of the
/// minimal-risk test. Equals 1 at `lambda = 0` (random guessing).
pub fn optimal_error(lambda: f64) -> Result<f64, DetectionError> {
    Ok(libm::erfc(mu(lambda)?.sqrt() / 2.0))
}

/// Common limit of the individual Type-I and Type-II errors,
/// `erfc(sqrt(mu) / 2) / 2`.
pub fn per_type_error_limit(lambda: f64) -> Result<f64, DetectionError> {
    Ok(0.5 * libm::erfc(mu(lambda)?.sqrt() / 2.0))
}

/// Limiting KL divergence between the planted and null models; identical to
/// [`mu`].
pub fn kl_limit(lambda: f64) -> Result<f64, DetectionError> {
    mu(lambda)
}

/// Limiting total-variation distance, `1 - optimal_error`.
pub fn tv_limit(lambda: f64) -> Result<f64, DetectionError> {
    Ok(1.0 - optimal_error(lambda)?)
}

/// Per-lambda table of all limiting quantities.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionCurves {
    pub lambda_grid: Vec<f64>,
    pub mu: Vec<f64>,
    pub mean_null: Vec<f64>,
    pub mean_alt: Vec<f64>,
    pub variance: Vec<f64>,
    pub err_star: Vec<f64>,
    pub kl: Vec<f64>,
    pub tv: Vec<f64>,
}

impl DetectionCurves {
    /// CSV with header `lambda,mu,mean_null,mean_alt,variance,err_star,kl,tv`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,mu,mean_null,mean_alt,variance,err_star,kl,tv\n");
        for i in 0..self.lambda_grid.len() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.lambda_grid[i],
                self.mu[i],
                self.mean_null[i],
                self.mean_alt[i],
                self.variance[i],
                self.err_star[i],
                self.kl[i],
                self.tv[i],
            ));
        }
        out
    }
}

/// Evaluates the limiting curves on a grid. Every grid point must lie below
/// the reconstruction threshold of `prior` (the formulas are invalid past
/// it, even where they would still evaluate), and below 1.
pub fn curves(prior: &Prior, lambda_grid: &[f64]) -> Result<DetectionCurves, DetectionError> {
    let lambda_c = reconstruction_threshold(prior, DEFAULT_Q_TOL)?.lambda_c;
    for &lambda in lambda_grid {
        check_unit_interval(lambda)?;
        if lambda >= lambda_c {
            return Err(DetectionError::AboveReconstructionThreshold { lambda, lambda_c });
        }
    }

    let mu_values: Vec<f64> = lambda_grid
        .iter()
        .map(|&l| mu(l))
        .collect::<Result<_, _>>()?;
    let err_star: Vec<f64> = lambda_grid
        .iter()
        .map(|&l| optimal_error(l))
        .collect::<Result<_, _>>()?;
    Ok(DetectionCurves {
        lambda_grid: lambda_grid.to_vec(),
        mean_null: mu_values.iter().map(|m| -m).collect(),
        mean_alt: mu_values.clone(),
        variance: mu_values.iter().map(|m| 2.0 * m).collect(),
        kl: mu_values.clone(),
        tv: err_star.iter().map(|e| 1.0 - e).collect(),
        mu: mu_values,
        err_star,
    })
}
