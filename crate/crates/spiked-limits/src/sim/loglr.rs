//! Log-likelihood ratio of the planted model against the null, evaluated
//! on a fixed observation either by exhaustive enumeration over prior
//! configurations or by Monte Carlo over prior draws.

use serde::Serialize;

use crate::prior::Prior;
use crate::rng::rng_for;

use super::enumerate::{ConfigState, GrayEnumerator};
use super::{hamiltonian, sample_spike, Observation, SimError};

/// Default ceiling on `|atoms|^n` for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LrMethod {
    Exact,
    Mc,
}

/// `log L(Y; lambda)` with its provenance. `std_error` is zero for the
/// exact method and a delta-method estimate for Monte Carlo.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogLrEstimate {
    pub value: f64,
    pub method: LrMethod,
    pub std_error: f64,
    pub m_samples: u64,
}

fn config_count(num_atoms: usize, n: usize) -> u128 {
    (num_atoms as u128).saturating_pow(n as u32)
}

/// Exact `log L(Y; lambda)` by summation over all `|atoms|^n` spike
/// configurations in Gray order.
///
/// Computed as `log sum_x w(x) e^{-H(x)} - log sum_x w(x)`: both sums share
/// one streaming log-sum-exp pass, and normalizing by the enumerated prior
/// mass cancels its rounding (at `lambda = 0` the two sums coincide and the
/// result is exactly zero).
pub fn log_lr_exact(
    obs: &Observation,
    lambda: f64,
    prior: &Prior,
    cap: u64,
) -> Result<LogLrEstimate, SimError> {
    if lambda < 0.0 {
        return Err(SimError::NegativeLambda(lambda));
    }
    let configs = config_count(prior.num_atoms(), obs.n());
    if configs > cap as u128 {
        return Err(SimError::EnumerationCapExceeded { configs, cap });
    }

    let mut numerator = StreamingLse::new();
    let mut denominator = StreamingLse::new();
    let mut gray = GrayEnumerator::new(prior.num_atoms(), obs.n());
    let mut state = ConfigState::new(obs, lambda, prior);
    loop {
        numerator.push(state.log_weight() + state.exponent());
        denominator.push(state.log_weight());
        match gray.step() {
            Some((site, old, new)) => state.apply(site, old, new),
            None => break,
        }
    }

    Ok(LogLrEstimate {
        value: numerator.value() - denominator.value(),
        method: LrMethod::Exact,
        std_error: 0.0,
        m_samples: configs as u64,
    })
}

/// Monte Carlo `log L(Y; lambda)`: the log of the sample mean of
/// `e^{-H(x)}` over `m` i.i.d. prior draws, with a delta-method standard
/// error. Deterministic in `seed`.
pub fn log_lr_mc(
    obs: &Observation,
    lambda: f64,
    prior: &Prior,
    m: u64,
    seed: u64,
) -> Result<LogLrEstimate, SimError> {
    if lambda < 0.0 {
        return Err(SimError::NegativeLambda(lambda));
    }
    if m < 100 {
        return Err(SimError::SampleCountTooSmall(m));
    }

    let mut rng = rng_for(seed, 0);
    let mut acc = StreamingMoments::new();
    for _ in 0..m {
        let x = sample_spike(prior, obs.n(), &mut rng);
        let energy = hamiltonian(obs, &x, lambda)?;
        acc.push(energy);
    }

    let (log_mean, rel_se) = acc.log_mean_and_rel_se();
    Ok(LogLrEstimate {
        value: log_mean,
        method: LrMethod::Mc,
        std_error: rel_se,
        m_samples: m,
    })
}

/// Streaming log-sum-exp with a running maximum.
struct StreamingLse {
    max: f64,
    sum: f64,
}

impl StreamingLse {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn push(&mut self, t: f64) {
        if t <= self.max {
            self.sum += (t - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - t).exp() + 1.0;
            self.max = t;
        }
    }

    fn value(&self) -> f64 {
        debug_assert!(self.sum > 0.0, "log-sum-exp of an empty or void stream");
        self.max + self.sum.ln()
    }
}

/// Streaming first and second moments of `e^{t}` under max rescaling, for
/// the mean-of-exponentials estimator and its relative standard error.
struct StreamingMoments {
    max: f64,
    s1: f64,
    s2: f64,
    count: u64,
}

impl StreamingMoments {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            s1: 0.0,
            s2: 0.0,
            count: 0,
        }
    }

    fn push(&mut self, t: f64) {
        self.count += 1;
        if t <= self.max {
            let u = (t - self.max).exp();
            self.s1 += u;
            self.s2 += u * u;
        } else {
            let shrink = (self.max - t).exp();
            self.s1 = self.s1 * shrink + 1.0;
            self.s2 = self.s2 * shrink * shrink + 1.0;
            self.max = t;
        }
    }

    /// `(log of the sample mean, SE of the log via the delta method)`.
    fn log_mean_and_rel_se(&self) -> (f64, f64) {
        let m = self.count as f64;
        let log_mean = self.max + self.s1.ln() - m.ln();
        // Var(u) with u scaled by e^{-max}; the scale cancels in se/mean.
        let mean_u = self.s1 / m;
        let var_u = ((self.s2 - self.s1 * self.s1 / m) / (m - 1.0)).max(0.0);
        let rel_se = (var_u / m).sqrt() / mean_u;
        (log_mean, rel_se)
    }
}
