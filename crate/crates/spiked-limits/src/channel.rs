//! Scalar Gaussian-channel free energies.
//!
//! The central object is the map `r -> psi(r)`, the expected log-partition
//! function of the one-dimensional channel `y = sqrt(r) x* + z` with the
//! spike prior on `x*` and standard normal `z`. The Gaussian expectation is
//! evaluated by Gauss-Hermite quadrature with adaptive order doubling; the
//! prior expectations are exact atom sums. The inner log-average over atoms
//! uses max-subtraction so large `r * support_radius^2` cannot overflow.

use crate::prior::Prior;
use crate::quadrature::{cached_standard_normal, QuadratureError};
use thiserror::Error;

/// Starting Gauss-Hermite order; doubled until two successive orders agree.
pub const DEFAULT_QUADRATURE_ORDER: usize = 80;
/// Orders past this are a stabilization failure, not a convergence path.
const MAX_QUADRATURE_ORDER: usize = 1280;
/// Agreement threshold between successive quadrature orders.
const STABILIZATION_TOL: f64 = 1e-10;

/// Primary step sizes for the third-derivative extrapolation.
const D3_STENCIL_PRIMARY: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
/// Cross-validation stencil, one halving finer.
const D3_STENCIL_SECONDARY: [f64; 3] = [5e-3, 2.5e-3, 1.25e-3];
/// Reject d3 if the two extrapolations disagree by more than this, relative
/// to max(1, |d3|).
const D3_CROSS_VALIDATION_TOL: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("channel strength r must be nonnegative, got {0}")]
    NegativeStrength(f64),

    #[error(transparent)]
    Quadrature(#[from] QuadratureError),

    #[error("quadrature did not stabilize below order {0}")]
    NoStabilization(usize),

    #[error("third-derivative stencils disagree: {0} vs {1}")]
    DerivativeCrossValidation(f64, f64),
}

/// log of `sum_k p_k exp(t_k)` with max subtraction.
fn log_sum_exp_weighted(terms: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, |m, (_, t)| m.max(t));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.map(|(w, t)| w * (t - max).exp()).sum();
    max + sum.ln()
}

/// `E_z log sum_k p_k exp(sqrt(r) z a_k + s a_k - (r/2) a_k^2)` at a fixed
/// quadrature order.
fn psi_hat_at_order(prior: &Prior, r: f64, s: f64, order: usize) -> Result<f64, ChannelError> {
    let rule = cached_standard_normal(order)?;
    let sqrt_r = r.sqrt();
    let atoms = prior.atoms();
    let weights = prior.weights();
    let value = rule.expect(|z| {
        let terms = atoms
            .iter()
            .zip(weights)
            .map(|(&a, &w)| (w, sqrt_r * z * a + s * a - 0.5 * r * a * a));
        log_sum_exp_weighted(terms)
    });
    Ok(value)
}

fn psi_bar_at_order(prior: &Prior, r: f64, s: f64, order: usize) -> Result<f64, ChannelError> {
    let mut total = 0.0;
    for (&a_star, &w_star) in prior.atoms().iter().zip(prior.weights()) {
        total += w_star * psi_hat_at_order(prior, r, s * a_star, order)?;
    }
    Ok(total)
}

/// Runs `eval` at doubling orders until two successive values agree.
fn stabilize<F: FnMut(usize) -> Result<f64, ChannelError>>(
    mut eval: F,
) -> Result<f64, ChannelError> {
    let mut order = DEFAULT_QUADRATURE_ORDER;
    let mut prev = eval(order)?;
    while order * 2 <= MAX_QUADRATURE_ORDER {
        order *= 2;
        let next = eval(order)?;
        if (next - prev).abs() <= STABILIZATION_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(ChannelError::NoStabilization(MAX_QUADRATURE_ORDER))
}

/// Expected log-likelihood-ratio of the scalar channel at signal strength
/// `r`; equals the KL divergence between `sqrt(r) x* + z` and `z`.
/// Nonnegative and nondecreasing in `r`.
pub fn psi(prior: &Prior, r: f64) -> Result<f64, ChannelError> {
    psi_bar(prior, r, r)
}

/// [`psi`] at one fixed quadrature order, with no adaptive doubling.
pub fn psi_with_order(prior: &Prior, r: f64, order: usize) -> Result<f64, ChannelError> {
    if r < 0.0 {
        return Err(ChannelError::NegativeStrength(r));
    }
    psi_bar_at_order(prior, r, r, order)
}

/// Log-partition function of the channel with decoupled tilt `s`:
/// `E_z log E_x exp(sqrt(r) z x + s x - (r/2) x^2)`.
pub fn psi_hat(prior: &Prior, r: f64, s: f64) -> Result<f64, ChannelError> {
    if r < 0.0 {
        return Err(ChannelError::NegativeStrength(r));
    }
    stabilize(|order| psi_hat_at_order(prior, r, s, order))
}

/// Average of [`psi_hat`] over the spike atom: `E_{x*} psi_hat(r, s x*)`.
/// Satisfies `psi_bar(r, r) = psi(r)`.
pub fn psi_bar(prior: &Prior, r: f64, s: f64) -> Result<f64, ChannelError> {
    if r < 0.0 {
        return Err(ChannelError::NegativeStrength(r));
    }
    stabilize(|order| psi_bar_at_order(prior, r, s, order))
}

/// First three derivatives of `psi` at `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiDerivatives {
    /// `E[X]^2 / 2`, exact.
    pub d1: f64,
    /// `(E[X^2])^2 / 2`, exact.
    pub d2: f64,
    /// Third derivative, by extrapolated finite differences.
    pub d3: f64,
}

/// Richardson extrapolation of `6 (psi(h) - d1 h - d2 h^2/2) / h^3` over a
/// three-point dyadic stencil. The cubic coefficient is isolated against
/// the exactly known linear and quadratic terms, which sidesteps the
/// one-sided domain of `psi` (it does not extend to r < 0).
fn d3_on_stencil(prior: &Prior, d1: f64, d2: f64, stencil: &[f64; 3]) -> Result<f64, ChannelError> {
    let mut g = [0.0; 3];
    for (gi, &h) in g.iter_mut().zip(stencil) {
        let value = psi(prior, h)?;
        *gi = 6.0 * (value - d1 * h - 0.5 * d2 * h * h) / (h * h * h);
    }
    // g(h) = d3 + a h + b h^2 + O(h^3); eliminate a, then b.
    let first = [2.0 * g[1] - g[0], 2.0 * g[2] - g[1]];
    Ok((4.0 * first[1] - first[0]) / 3.0)
}

/// Derivatives of `psi` at zero: the first two from exact moments, the
/// third by extrapolated finite differences cross-validated on a second
/// stencil (rejected if the extrapolations disagree).
///
/// The stated `d2` is exact for centered priors; for non-centered priors
/// the residual subtraction is contaminated and the cross-validation guard
/// rejects the input.
pub fn psi_derivatives_at_zero(prior: &Prior) -> Result<PsiDerivatives, ChannelError> {
    let m1 = prior.moment(1);
    let m2 = prior.moment(2);
    let d1 = 0.5 * m1 * m1;
    let d2 = 0.5 * m2 * m2;

    let primary = d3_on_stencil(prior, d1, d2, &D3_STENCIL_PRIMARY)?;
    let secondary = d3_on_stencil(prior, d1, d2, &D3_STENCIL_SECONDARY)?;
    let scale = primary.abs().max(secondary.abs()).max(1.0);
    if (primary - secondary).abs() > D3_CROSS_VALIDATION_TOL * scale {
        return Err(ChannelError::DerivativeCrossValidation(primary, secondary));
    }

    Ok(PsiDerivatives {
        d1,
        d2,
        d3: secondary,
    })
}
