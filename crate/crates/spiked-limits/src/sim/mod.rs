//! Sampling and inference on simulated spiked Wigner observations.
//!
//! An [`Observation`] stores the strictly-upper-triangular data
//! `Y_ij = sqrt(lambda/n) x*_i x*_j + W_ij` (noise scale N(0,1)) in a flat
//! row-major array; the diagonal is carried only when the noise level
//! `sigma` is finite, matching the convention that `sigma = +inf` discards
//! it. The symmetric matrix is never materialized except for the
//! top-eigenvalue diagnostic.

mod enumerate;
mod loglr;
mod overlap;

pub use loglr::{log_lr_exact, log_lr_mc, LogLrEstimate, LrMethod, DEFAULT_ENUMERATION_CAP};
pub use overlap::{overlap_moments, GibbsParams, OverlapMethod, OverlapStats};

use std::io::{self, Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::prior::Prior;
use crate::rng::rng_for;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("system size must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),

    #[error("sigma must be positive or infinite, got {0}")]
    InvalidSigma(f64),

    #[error("configuration vector has length {got}, observation has n = {want}")]
    LengthMismatch { got: usize, want: usize },

    #[error("enumeration needs {configs} configurations, cap is {cap}")]
    EnumerationCapExceeded { configs: u128, cap: u64 },

    #[error("Monte Carlo sample count must be at least 100, got {0}")]
    SampleCountTooSmall(u64),

    #[error("spike length {got} does not match observation n = {want}")]
    SpikeMismatch { got: usize, want: usize },

    #[error("Gibbs chains not converged: split-half means differ by {distance:.2} pooled SEs")]
    GibbsNotConverged { distance: f64 },

    #[error("malformed observation file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One simulated draw of the model: flat upper-triangular entries, an
/// optional diagonal, and the generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    n: usize,
    upper: Vec<f64>,
    diag: Option<Vec<f64>>,
    sigma: f64,
    lambda_true: f64,
    seed: u64,
}

impl Observation {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Flat strictly-upper entries, row-major over `i < j`.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn diag(&self) -> Option<&[f64]> {
        self.diag.as_deref()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda_true(&self) -> f64 {
        self.lambda_true
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of `Y_ij` in the flat upper array, for `i < j`.
    #[inline]
    pub fn upper_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * self.n - i * (i + 1) / 2 + j - i - 1
    }

    #[inline]
    pub fn upper_at(&self, i: usize, j: usize) -> f64 {
        self.upper[self.upper_index(i, j)]
    }

    /// Serializes as little-endian 64-bit fields: `n`, `sigma` (IEEE +inf
    /// when the diagonal is absent), `lambda_true`, `seed`, then the upper
    /// array, then the diagonal iff `sigma` is finite.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.sigma.to_le_bytes())?;
        w.write_all(&self.lambda_true.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.upper {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(diag) = &self.diag {
            for v in diag {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SimError> {
        let mut buf = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64, SimError> {
            r.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        let n = next_u64(&mut r)? as usize;
        let sigma = f64::from_bits(next_u64(&mut r)?);
        let lambda_true = f64::from_bits(next_u64(&mut r)?);
        let seed = next_u64(&mut r)?;
        if n < 2 {
            return Err(SimError::Format(format!("n = {n} below minimum")));
        }
        // A corrupt header must not drive the upcoming allocations.
        if n > 1 << 20 {
            return Err(SimError::Format(format!("n = {n} implausibly large")));
        }
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(SimError::Format(format!("sigma = {sigma} not positive")));
        }
        let read_vec = |r: &mut R, len: usize| -> Result<Vec<f64>, SimError> {
            let mut out = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut buf)?;
                let v = f64::from_le_bytes(buf);
                if !v.is_finite() {
                    return Err(SimError::Format("non-finite entry".into()));
                }
                out.push(v);
            }
            Ok(out)
        };
        let upper = read_vec(&mut r, n * (n - 1) / 2)?;
        let diag = if sigma.is_finite() {
            Some(read_vec(&mut r, n)?)
        } else {
            None
        };
        Ok(Self {
            n,
            upper,
            diag,
            sigma,
            lambda_true,
            seed,
        })
    }
}

/// Draws one observation. With `lambda > 0` the spike is sampled i.i.d.
/// from the prior and returned alongside; with `lambda = 0` the data is
/// pure noise and the spike is `None`. Pass `sigma = f64::INFINITY` to
/// discard the diagonal. Deterministic in `seed`.
pub fn sample_observation(
    prior: &Prior,
    n: usize,
    lambda: f64,
    sigma: f64,
    seed: u64,
) -> Result<(Observation, Option<Vec<f64>>), SimError> {
    if n < 2 {
        return Err(SimError::DimensionTooSmall(n));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(SimError::NegativeLambda(lambda));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(SimError::InvalidSigma(sigma));
    }

    let mut rng = rng_for(seed, 0);
    let spike = if lambda > 0.0 {
        Some(sample_spike(prior, n, &mut rng))
    } else {
        None
    };

    let scale = (lambda / n as f64).sqrt();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let noise: f64 = rng.sample(StandardNormal);
            let signal = spike.as_ref().map_or(0.0, |x| scale * x[i] * x[j]);
            upper.push(signal + noise);
        }
    }
    let diag = if sigma.is_finite() {
        Some(
            (0..n)
                .map(|i| {
                    let noise: f64 = rng.sample(StandardNormal);
                    let signal = spike.as_ref().map_or(0.0, |x| scale * x[i] * x[i]);
                    signal + sigma * noise
                })
                .collect(),
        )
    } else {
        None
    };

    Ok((
        Observation {
            n,
            upper,
            diag,
            sigma,
            lambda_true: lambda,
            seed,
        },
        spike,
    ))
}

/// i.i.d. draws from the prior by inverse CDF.
pub(crate) fn sample_spike<R: Rng>(prior: &Prior, n: usize, rng: &mut R) -> Vec<f64> {
    let cum = prior.cumulative_weights();
    let atoms = prior.atoms();
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let idx = cum.iter().position(|&c| u <= c).unwrap_or(cum.len() - 1);
            atoms[idx]
        })
        .collect()
}

/// The posterior exponent `-H(x)` at configuration `x` and signal strength
/// `lambda`:
/// `sum_{i<j} sqrt(lambda/n) Y_ij x_i x_j - (lambda/2n) x_i^2 x_j^2`,
/// plus `(1/sigma^2) sum_i sqrt(lambda/n) Y_ii x_i^2 - (lambda/2n) x_i^4`
/// when the observation carries its diagonal.
pub fn hamiltonian(obs: &Observation, x: &[f64], lambda: f64) -> Result<f64, SimError> {
    if x.len() != obs.n {
        return Err(SimError::LengthMismatch {
            got: x.len(),
            want: obs.n,
        });
    }
    if lambda < 0.0 {
        return Err(SimError::NegativeLambda(lambda));
    }

    let n = obs.n;
    let scale = (lambda / n as f64).sqrt();
    let mut pair = 0.0;
    let mut idx = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            pair += obs.upper[idx] * x[i] * x[j];
            idx += 1;
        }
    }
    let s2: f64 = x.iter().map(|v| v * v).sum();
    let s4: f64 = x.iter().map(|v| v * v * v * v).sum();
    let quartic_pairs = (s2 * s2 - s4) / 2.0;
    let mut energy = scale * pair - lambda / (2.0 * n as f64) * quartic_pairs;

    if let Some(diag) = &obs.diag {
        let lin: f64 = diag.iter().zip(x).map(|(y, v)| y * v * v).sum();
        energy += (scale * lin - lambda / (2.0 * n as f64) * s4) / (obs.sigma * obs.sigma);
    }
    Ok(energy)
}

/// Top eigenvalue of the symmetrized `Y / sqrt(n)` (zero diagonal when the
/// observation has none), by power iteration with Rayleigh quotients. Used
/// as a spectral diagnostic; the only place the dense matrix exists.
pub fn top_eigenvalue(obs: &Observation, iterations: usize) -> f64 {
    let n = obs.n;
    let root_n = (n as f64).sqrt();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = obs.upper_at(i, j) / root_n;
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    if let Some(diag) = &obs.diag {
        for i in 0..n {
            a[i * n + i] = diag[i] / root_n;
        }
    }

    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin() * 0.1).collect();
    let mut rayleigh = 0.0;
    for _ in 0..iterations {
        let mut w = vec![0.0; n];
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            w[i] = row.iter().zip(&v).map(|(aij, vj)| aij * vj).sum();
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        rayleigh = w.iter().zip(&v).map(|(wi, vi)| wi * vi).sum::<f64>()
            / v.iter().map(|x| x * x).sum::<f64>();
        for (wi, vi) in w.iter().zip(v.iter_mut()) {
            *vi = wi / norm;
        }
    }
    rayleigh
}
