//! Posterior overlap moments on a planted observation.
//!
//! Measures the second and fourth moments of the replica-spike overlap
//! `R_{1,*} = x . x* / n` and the replica-replica overlap `R_{1,2}` under
//! the Gibbs posterior, either exactly (weighted sums over all
//! configurations) or by two independent heat-bath chains.

use serde::Serialize;

use crate::prior::Prior;
use crate::rng::rng_for;

use super::enumerate::{ConfigState, GrayEnumerator};
use super::{sample_spike, Observation, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMethod {
    Exact,
    Gibbs,
}

/// Heat-bath sampler schedule. Sweeps touch every site once; measurements
/// happen every `thinning` sweeps after `burn_in_sweeps`.
#[derive(Debug, Clone, Copy)]
pub struct GibbsParams {
    pub burn_in_sweeps: usize,
    pub measure_sweeps: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl Default for GibbsParams {
    fn default() -> Self {
        Self {
            burn_in_sweeps: 1_000,
            measure_sweeps: 10_000,
            thinning: 10,
            seed: 0,
        }
    }
}

/// Posterior moments of the overlaps, with standard errors (zero for the
/// exact method, where the only averaging is the Gibbs one).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OverlapStats {
    pub e_r1star_sq: f64,
    pub e_r1star_4: f64,
    pub e_r12_sq: f64,
    pub e_r12_4: f64,
    pub se_r1star_sq: f64,
    pub se_r1star_4: f64,
    pub se_r12_sq: f64,
    pub se_r12_4: f64,
    pub method: OverlapMethod,
    pub n: usize,
}

/// Overlap moments under the posterior at signal strength `lambda`.
///
/// `spike` is the planted vector that generated `obs`. `Exact` enumerates
/// all `|atoms|^n` configurations (subject to `cap`); `Gibbs` runs two
/// independent single-site heat-bath chains and errors out if the
/// split-half means of `R_{1,*}^2` disagree by more than three pooled
/// standard errors.
pub fn overlap_moments(
    obs: &Observation,
    spike: &[f64],
    lambda: f64,
    prior: &Prior,
    method: OverlapMethod,
    cap: u64,
    gibbs: GibbsParams,
) -> Result<OverlapStats, SimError> {
    if spike.len() != obs.n() {
        return Err(SimError::SpikeMismatch {
            got: spike.len(),
            want: obs.n(),
        });
    }
    if lambda < 0.0 {
        return Err(SimError::NegativeLambda(lambda));
    }
    match method {
        OverlapMethod::Exact => exact_moments(obs, spike, lambda, prior, cap),
        OverlapMethod::Gibbs => gibbs_moments(obs, spike, lambda, prior, gibbs),
    }
}

fn exact_moments(
    obs: &Observation,
    spike: &[f64],
    lambda: f64,
    prior: &Prior,
    cap: u64,
) -> Result<OverlapStats, SimError> {
    let n = obs.n();
    let configs = (prior.num_atoms() as u128).saturating_pow(n as u32);
    if configs > cap as u128 {
        return Err(SimError::EnumerationCapExceeded { configs, cap });
    }

    // Pass 1: the maximal posterior exponent, for a fixed-shift softmax.
    let mut t_max = f64::NEG_INFINITY;
    {
        let mut gray = GrayEnumerator::new(prior.num_atoms(), n);
        let mut state = ConfigState::new(obs, lambda, prior);
        loop {
            t_max = t_max.max(state.log_weight() + state.exponent());
            match gray.step() {
                Some((site, old, new)) => state.apply(site, old, new),
                None => break,
            }
        }
    }

    // Pass 2: weighted accumulation of the overlap statistics.
    let tuples = sym4_multiplicities(n);
    let mut z = 0.0;
    let mut r2 = 0.0;
    let mut r4 = 0.0;
    let mut pair_mean = vec![0.0; n * n];
    let mut quad_mean = vec![0.0; tuples.len()];

    let mut gray = GrayEnumerator::new(prior.num_atoms(), n);
    let mut state = ConfigState::new(obs, lambda, prior);
    let mut r_cur: f64 = state.x().iter().zip(spike).map(|(x, s)| x * s).sum::<f64>() / n as f64;
    loop {
        let w = (state.log_weight() + state.exponent() - t_max).exp();
        z += w;
        let rsq = r_cur * r_cur;
        r2 += w * rsq;
        r4 += w * rsq * rsq;

        let x = state.x();
        for i in 0..n {
            let wxi = w * x[i];
            for j in i..n {
                pair_mean[i * n + j] += wxi * x[j];
            }
        }
        let mut t = 0;
        for i in 0..n {
            let pi = w * x[i];
            for j in i..n {
                let pij = pi * x[j];
                for k in j..n {
                    let pijk = pij * x[k];
                    for &xl in &x[k..n] {
                        quad_mean[t] += pijk * xl;
                        t += 1;
                    }
                }
            }
        }

        match gray.step() {
            Some((site, old, new)) => {
                let old_x = prior.atoms()[old];
                let new_x = prior.atoms()[new];
                r_cur += (new_x - old_x) * spike[site] / n as f64;
                state.apply(site, old, new);
            }
            None => break,
        }
    }

    let nf = n as f64;
    // <R_12^2> = (1/n^2) sum_{ij} <x_i x_j>^2 over independent replicas.
    let mut r12_sq = 0.0;
    for i in 0..n {
        for j in i..n {
            let m = pair_mean[i * n + j] / z;
            let mult = if i == j { 1.0 } else { 2.0 };
            r12_sq += mult * m * m;
        }
    }
    r12_sq /= nf * nf;
    // <R_12^4> = (1/n^4) sum_{ijkl} <x_i x_j x_k x_l>^2.
    let mut r12_4 = 0.0;
    for (t, &mult) in tuples.iter().enumerate() {
        let m = quad_mean[t] / z;
        r12_4 += mult * m * m;
    }
    r12_4 /= nf * nf * nf * nf;

    Ok(OverlapStats {
        e_r1star_sq: r2 / z,
        e_r1star_4: r4 / z,
        e_r12_sq: r12_sq,
        e_r12_4: r12_4,
        se_r1star_sq: 0.0,
        se_r1star_4: 0.0,
        se_r12_sq: 0.0,
        se_r12_4: 0.0,
        method: OverlapMethod::Exact,
        n,
    })
}

/// Multiplicities `4! / prod(rep!)` for each ordered tuple `i<=j<=k<=l`,
/// in the same lexicographic order the accumulation loop uses.
fn sym4_multiplicities(n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                for l in k..n {
                    let mut counts = std::collections::HashMap::new();
                    for idx in [i, j, k, l] {
                        *counts.entry(idx).or_insert(0u32) += 1;
                    }
                    let denom: u32 = counts.values().map(|&c| factorial(c)).product();
                    out.push(24.0 / denom as f64);
                }
            }
        }
    }
    out
}

fn factorial(c: u32) -> u32 {
    (1..=c).product::<u32>().max(1)
}

struct GibbsChain<'a> {
    obs: &'a Observation,
    lambda: f64,
    scale: f64,
    atoms: &'a [f64],
    ln_weights: Vec<f64>,
    x: Vec<f64>,
    s2: f64,
}

impl<'a> GibbsChain<'a> {
    fn new(obs: &'a Observation, lambda: f64, prior: &'a Prior, x0: Vec<f64>) -> Self {
        let s2 = x0.iter().map(|v| v * v).sum();
        Self {
            obs,
            lambda,
            scale: (lambda / obs.n() as f64).sqrt(),
            atoms: prior.atoms(),
            ln_weights: prior.weights().iter().map(|w| w.ln()).collect(),
            x: x0,
            s2,
        }
    }

    /// One heat-bath sweep: every site resampled from its exact discrete
    /// conditional (linear local field plus the quartic and diagonal terms).
    fn sweep<R: rand::Rng>(&mut self, rng: &mut R) {
        let n = self.obs.n();
        let half_lambda_over_n = self.lambda / (2.0 * n as f64);
        let mut logits = vec![0.0; self.atoms.len()];
        for site in 0..n {
            let mut field = 0.0;
            for j in 0..n {
                if j != site {
                    let (a, b) = if j < site { (j, site) } else { (site, j) };
                    field += self.obs.upper_at(a, b) * self.x[j];
                }
            }
            field *= self.scale;
            let others_s2 = self.s2 - self.x[site] * self.x[site];

            for (t, (&a, lw)) in self.atoms.iter().zip(&self.ln_weights).enumerate() {
                let mut logit = lw + a * field - half_lambda_over_n * a * a * others_s2;
                if let Some(diag) = self.obs.diag() {
                    logit += (self.scale * diag[site] * a * a - half_lambda_over_n * a.powi(4))
                        / (self.obs.sigma() * self.obs.sigma());
                }
                logits[t] = logit;
            }

            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = logits.iter().map(|t| (t - max).exp()).sum();
            let mut u: f64 = rng.gen::<f64>() * total;
            let mut choice = logits.len() - 1;
            for (t, logit) in logits.iter().enumerate() {
                u -= (logit - max).exp();
                if u <= 0.0 {
                    choice = t;
                    break;
                }
            }

            let new = self.atoms[choice];
            self.s2 += new * new - self.x[site] * self.x[site];
            self.x[site] = new;
        }
    }

    fn overlap_with(&self, other: &[f64]) -> f64 {
        self.x.iter().zip(other).map(|(a, b)| a * b).sum::<f64>() / self.obs.n() as f64
    }
}

fn gibbs_moments(
    obs: &Observation,
    spike: &[f64],
    lambda: f64,
    prior: &Prior,
    params: GibbsParams,
) -> Result<OverlapStats, SimError> {
    let mut rng_a = rng_for(params.seed, 1);
    let mut rng_b = rng_for(params.seed, 2);
    let x0_a = sample_spike(prior, obs.n(), &mut rng_a);
    let x0_b = sample_spike(prior, obs.n(), &mut rng_b);
    let mut chain_a = GibbsChain::new(obs, lambda, prior, x0_a);
    let mut chain_b = GibbsChain::new(obs, lambda, prior, x0_b);

    for _ in 0..params.burn_in_sweeps {
        chain_a.sweep(&mut rng_a);
        chain_b.sweep(&mut rng_b);
    }

    let events = params.measure_sweeps / params.thinning.max(1);
    let mut r1_sq = Vec::with_capacity(events);
    let mut r1_4 = Vec::with_capacity(events);
    let mut r12_sq = Vec::with_capacity(events);
    let mut r12_4 = Vec::with_capacity(events);
    for _ in 0..events {
        for _ in 0..params.thinning.max(1) {
            chain_a.sweep(&mut rng_a);
            chain_b.sweep(&mut rng_b);
        }
        let ra = chain_a.overlap_with(spike);
        let rb = chain_b.overlap_with(spike);
        let rab = chain_a.overlap_with(&chain_b.x);
        r1_sq.push(0.5 * (ra * ra + rb * rb));
        r1_4.push(0.5 * (ra.powi(4) + rb.powi(4)));
        r12_sq.push(rab * rab);
        r12_4.push(rab.powi(4));
    }

    // Split-half convergence diagnostic on R_{1,*}^2.
    let half = r1_sq.len() / 2;
    let (first, second) = r1_sq.split_at(half);
    let (m1, se1) = mean_and_se(first);
    let (m2, se2) = mean_and_se(second);
    let pooled = (se1 * se1 + se2 * se2).sqrt();
    if pooled > 0.0 {
        let distance = (m1 - m2).abs() / pooled;
        if distance > 3.0 {
            return Err(SimError::GibbsNotConverged { distance });
        }
    }

    let (e1, s1) = batch_mean_and_se(&r1_sq);
    let (e2, s2) = batch_mean_and_se(&r1_4);
    let (e3, s3) = batch_mean_and_se(&r12_sq);
    let (e4, s4) = batch_mean_and_se(&r12_4);
    Ok(OverlapStats {
        e_r1star_sq: e1,
        e_r1star_4: e2,
        e_r12_sq: e3,
        e_r12_4: e4,
        se_r1star_sq: s1,
        se_r1star_4: s2,
        se_r12_sq: s3,
        se_r12_4: s4,
        method: OverlapMethod::Gibbs,
        n: obs.n(),
    })
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

/// Mean of the full sample with a standard error from 20 batch means,
/// absorbing chain autocorrelation at the batch scale.
fn batch_mean_and_se(samples: &[f64]) -> (f64, f64) {
    let batches = 20.min(samples.len().max(1));
    let per = (samples.len() / batches).max(1);
    let means: Vec<f64> = samples
        .chunks(per)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let (_, se) = mean_and_se(&means);
    let grand = samples.iter().sum::<f64>() / samples.len() as f64;
    (grand, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::sample_observation;

    const CAP: u64 = 1 << 20;

    #[test]
    fn spike_length_checked() {
        let p = Prior::rademacher();
        let (obs, spike) = sample_observation(&p, 6, 0.5, f64::INFINITY, 1).unwrap();
        let spike = spike.unwrap();
        assert!(matches!(
            overlap_moments(
                &obs,
                &spike[..5],
                0.5,
                &p,
                OverlapMethod::Exact,
                CAP,
                GibbsParams::default()
            ),
            Err(SimError::SpikeMismatch { .. })
        ));
    }

    #[test]
    fn zero_lambda_posterior_is_prior() {
        // With lambda = 0 the posterior is the prior, so
        // E<R^2> = E[X^2]^2 / n = 1/n for a unit-variance prior. Averaged
        // over observations it is exact; a single observation suffices
        // because the posterior does not depend on Y at lambda = 0.
        let p = Prior::rademacher();
        let n = 8;
        let (obs, _) = sample_observation(&p, n, 0.0, f64::INFINITY, 3).unwrap();
        let spike: Vec<f64> = sample_spike(&p, n, &mut rng_for(1, 0));
        let stats = overlap_moments(
            &obs,
            &spike,
            0.0,
            &p,
            OverlapMethod::Exact,
            CAP,
            GibbsParams::default(),
        )
        .unwrap();
        assert!(
            (stats.e_r1star_sq - 1.0 / n as f64).abs() < 1e-12,
            "{} vs {}",
            stats.e_r1star_sq,
            1.0 / n as f64
        );
        // R_12 has the same law as R_1* at lambda = 0.
        assert!((stats.e_r12_sq - 1.0 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn fourth_moment_at_zero_lambda_matches_combinatorics() {
        // For Rademacher atoms, R = (1/n) sum eps_i with eps_i = x_i x*_i
        // i.i.d. Rademacher at lambda = 0, so E R^4 = (3n - 2) / n^3.
        let p = Prior::rademacher();
        let n = 8usize;
        let (obs, _) = sample_observation(&p, n, 0.0, f64::INFINITY, 5).unwrap();
        let spike = sample_spike(&p, n, &mut rng_for(2, 0));
        let stats = overlap_moments(
            &obs,
            &spike,
            0.0,
            &p,
            OverlapMethod::Exact,
            CAP,
            GibbsParams::default(),
        )
        .unwrap();
        let expected = (3.0 * n as f64 - 2.0) / (n as f64).powi(3);
        assert!((stats.e_r1star_4 - expected).abs() < 1e-12);
        assert!((stats.e_r12_4 - expected).abs() < 1e-12);
    }

    #[test]
    fn jensen_between_moments() {
        let p = Prior::rademacher();
        let (obs, spike) = sample_observation(&p, 10, 0.5, f64::INFINITY, 17).unwrap();
        let spike = spike.unwrap();
        let stats = overlap_moments(
            &obs,
            &spike,
            0.5,
            &p,
            OverlapMethod::Exact,
            CAP,
            GibbsParams::default(),
        )
        .unwrap();
        assert!(stats.e_r1star_sq * stats.e_r1star_sq <= stats.e_r1star_4 + 1e-15);
        assert!(stats.e_r12_sq * stats.e_r12_sq <= stats.e_r12_4 + 1e-15);
        // Bounded by the support radius powers.
        assert!(stats.e_r1star_4 <= p.support_radius().powi(4) + 1e-12);
    }

    #[test]
    fn enumeration_cap_enforced() {
        let p = Prior::sparse_rademacher(0.3).unwrap();
        let (obs, spike) = sample_observation(&p, 14, 0.5, f64::INFINITY, 1).unwrap();
        let spike = spike.unwrap();
        assert!(matches!(
            overlap_moments(
                &obs,
                &spike,
                0.5,
                &p,
                OverlapMethod::Exact,
                CAP,
                GibbsParams::default()
            ),
            Err(SimError::EnumerationCapExceeded { .. })
        ));
    }

    #[test]
    fn gibbs_agrees_with_exact() {
        let p = Prior::rademacher();
        let (obs, spike) = sample_observation(&p, 10, 0.5, f64::INFINITY, 23).unwrap();
        let spike = spike.unwrap();
        let exact = overlap_moments(
            &obs,
            &spike,
            0.5,
            &p,
            OverlapMethod::Exact,
            CAP,
            GibbsParams::default(),
        )
        .unwrap();
        let params = GibbsParams {
            seed: 7,
            ..GibbsParams::default()
        };
        let gibbs =
            overlap_moments(&obs, &spike, 0.5, &p, OverlapMethod::Gibbs, CAP, params).unwrap();
        for (e, g, se, label) in [
            (
                exact.e_r1star_sq,
                gibbs.e_r1star_sq,
                gibbs.se_r1star_sq,
                "r1sq",
            ),
            (exact.e_r1star_4, gibbs.e_r1star_4, gibbs.se_r1star_4, "r14"),
            (exact.e_r12_sq, gibbs.e_r12_sq, gibbs.se_r12_sq, "r12sq"),
            (exact.e_r12_4, gibbs.e_r12_4, gibbs.se_r12_4, "r124"),
        ] {
            assert!(
                (e - g).abs() <= 3.0 * se,
                "{label}: exact {e} vs gibbs {g} +- {se}"
            );
        }
    }

    #[test]
    fn gibbs_deterministic_in_seed() {
        let p = Prior::rademacher();
        let (obs, spike) = sample_observation(&p, 6, 0.4, f64::INFINITY, 2).unwrap();
        let spike = spike.unwrap();
        let params = GibbsParams {
            burn_in_sweeps: 50,
            measure_sweeps: 200,
            thinning: 5,
            seed: 11,
        };
        let a = overlap_moments(&obs, &spike, 0.4, &p, OverlapMethod::Gibbs, CAP, params).unwrap();
        let b = overlap_moments(&obs, &spike, 0.4, &p, OverlapMethod::Gibbs, CAP, params).unwrap();
        assert_eq!(a.e_r1star_sq, b.e_r1star_sq);
        assert_eq!(a.e_r12_4, b.e_r12_4);
    }
}
