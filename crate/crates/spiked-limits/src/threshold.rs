//! Replica-symmetric potential, its maximizer, and the thresholds derived
//! from it.
//!
//! The potential is `F(lambda, q) = psi(lambda q) - lambda q^2 / 4`; its
//! supremum over `q >= 0` defines the RS formula `phi_RS(lambda)`. The
//! reconstruction threshold is the largest `lambda` where the maximizer
//! stays at zero. Maximization is a dense grid scan followed by
//! golden-section refinement: near a first-order transition `F` has two
//! competing local maxima, so a purely local search is not trustworthy.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{psi, ChannelError};
use crate::prior::Prior;

/// Grid resolution for the q-scan, as a fraction of `E[X^2]`.
const Q_GRID_STEP_FRACTION: f64 = 1e-3;
/// The q-interval `[0, E[X^2]]` is extended by this factor to guard the
/// solver against edge effects.
const Q_INTERVAL_MARGIN: f64 = 1.1;
/// Width of the golden-section bracket at termination.
const Q_REFINE_TOL: f64 = 1e-8;
/// Grid values within this of the best are treated as ties; the largest
/// tied maximizer wins.
const VALUE_TIE_TOL: f64 = 1e-9;
/// `phi_RS(lambda) > 0` test level used by the sparsity search.
const PHI_POSITIVE_TOL: f64 = 1e-9;
/// Default maximizer cutoff for "q* is zero".
pub const DEFAULT_Q_TOL: f64 = 1e-6;
/// Absolute width at which the threshold bisection stops. Keeps the
/// reported threshold within 5e-7 of the indicator flip, so that
/// `lambda_c (E[X^2])^2 <= 1 + 1e-6` survives the midpoint rounding.
const LAMBDA_BISECT_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ThresholdError {
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),

    #[error("q must be nonnegative, got {0}")]
    NegativeOverlap(f64),

    #[error("prior has zero variance; spectral threshold is undefined")]
    ZeroVariance,

    #[error("bisection bracket invalid: indicator is {at_lo} at {lo} and {at_hi} at {hi}")]
    BracketFailure {
        lo: f64,
        hi: f64,
        at_lo: bool,
        at_hi: bool,
    },

    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Supremum of the RS potential at one signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsMaximum {
    pub q_star: f64,
    pub phi_rs: f64,
}

/// Reconstruction threshold together with the centering flag; a
/// non-centered prior short-circuits to zero (any draw from the prior
/// already has positive overlap with the spike).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionThreshold {
    pub lambda_c: f64,
    pub prior_centered: bool,
}

/// Per-lambda table of the RS quantities plus the two thresholds.
#[derive(Debug, Clone, Serialize)]
pub struct RsReport {
    pub lambda_grid: Vec<f64>,
    pub q_star: Vec<f64>,
    pub phi_rs: Vec<f64>,
    pub lambda_c: f64,
    pub spectral_threshold: f64,
}

impl RsReport {
    /// CSV with header `lambda,q_star,phi_rs`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,q_star,phi_rs\n");
        for i in 0..self.lambda_grid.len() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e}\n",
                self.lambda_grid[i], self.q_star[i], self.phi_rs[i]
            ));
        }
        out
    }
}

/// `F(lambda, q) = psi(lambda q) - lambda q^2 / 4`.
pub fn rs_potential(prior: &Prior, lambda: f64, q: f64) -> Result<f64, ThresholdError> {
    if lambda < 0.0 {
        return Err(ThresholdError::NegativeLambda(lambda));
    }
    if q < 0.0 {
        return Err(ThresholdError::NegativeOverlap(q));
    }
    Ok(psi(prior, lambda * q)? - lambda * q * q / 4.0)
}

/// Global maximum of `F(lambda, .)` over `q >= 0`.
///
/// Dense scan over `[0, 1.1 E[X^2]]` followed by golden-section refinement
/// around the best cell. Under value ties of 1e-9 the largest maximizer is
/// returned. `F(lambda, 0) = 0` is an identity (`psi(0) = log 1`), so the
/// reported supremum is clamped at zero from below.
pub fn maximize_rs(prior: &Prior, lambda: f64) -> Result<RsMaximum, ThresholdError> {
    if lambda < 0.0 {
        return Err(ThresholdError::NegativeLambda(lambda));
    }
    let m2 = prior.moment(2);
    if m2 <= 0.0 || lambda == 0.0 {
        return Ok(RsMaximum {
            q_star: 0.0,
            phi_rs: 0.0,
        });
    }

    let step = Q_GRID_STEP_FRACTION * m2;
    let q_hi = Q_INTERVAL_MARGIN * m2;
    let n_cells = (q_hi / step).ceil() as usize;

    // Grid values; index 0 is the exact identity F(lambda, 0) = 0.
    let mut best_value = 0.0f64;
    let mut grid = Vec::with_capacity(n_cells + 1);
    grid.push(0.0);
    for i in 1..=n_cells {
        let q = (i as f64 * step).min(q_hi);
        let value = rs_potential(prior, lambda, q)?;
        best_value = best_value.max(value);
        grid.push(value);
    }

    // Tie handling: near a first-order transition two separated maxima of F
    // agree at zero, and the larger q wins. Ties are resolved between
    // *distinct* maxima, i.e. between contiguous runs of tied cells, so that
    // a numerically flat stretch next to q = 0 (where F ~ -q^3) is still
    // read as the zero maximizer: take the run containing the largest tied
    // index, then the best cell by value inside that run.
    let tied = |i: usize| grid[i] >= best_value - VALUE_TIE_TOL;
    let top = (0..grid.len())
        .rev()
        .find(|&i| tied(i))
        .expect("grid is nonempty");
    let mut run_start = top;
    while run_start > 0 && tied(run_start - 1) {
        run_start -= 1;
    }
    let best_idx = (run_start..=top)
        .max_by(|&a, &b| grid[a].total_cmp(&grid[b]))
        .expect("run is nonempty");

    if best_idx == 0 {
        return Ok(RsMaximum {
            q_star: 0.0,
            phi_rs: 0.0,
        });
    }

    let lo = (best_idx - 1) as f64 * step;
    let hi = ((best_idx + 1) as f64 * step).min(q_hi);
    let (q_star, refined) = golden_section_max(
        |q| rs_potential(prior, lambda, q).unwrap_or(f64::NEG_INFINITY),
        lo,
        hi,
        Q_REFINE_TOL,
    );

    // sup_q F >= F(0) = 0 identically; negative residue is rounding.
    if refined <= 0.0 && grid[best_idx] <= 0.0 {
        return Ok(RsMaximum {
            q_star: 0.0,
            phi_rs: 0.0,
        });
    }
    let (q_star, phi_rs) = if refined >= grid[best_idx] {
        (q_star, refined)
    } else {
        (best_idx as f64 * step, grid[best_idx])
    };
    Ok(RsMaximum { q_star, phi_rs })
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `(E[X^2])^-2`, where the top eigenvalue detaches from the bulk.
pub fn spectral_threshold(prior: &Prior) -> Result<f64, ThresholdError> {
    let m2 = prior.moment(2);
    if m2 <= 0.0 {
        return Err(ThresholdError::ZeroVariance);
    }
    Ok((m2 * m2).recip())
}

/// Largest `lambda` with `q*(lambda) = 0`, by bisection on the indicator
/// `q*(lambda) > q_tol`.
///
/// The indicator is monotone because `q*` is nondecreasing in `lambda`, so
/// the bisection stays correct even across a discontinuous (first-order)
/// jump of `q*`. Above the spectral value `(E[X^2])^-2` the origin is a
/// local minimum of `F` (`d^2F/dq^2(0) = lambda (lambda E[X^2]^2 - 1) / 2`),
/// so `q* > 0` there without consulting the solver; this matters because at
/// a continuous transition `q*` grows like `lambda - lambda_c` and the
/// potential separates it from `q = 0` only at order `q*^3`, far below what
/// a value-based maximization can resolve. Below the spectral value the
/// indicator reduces to the presence of a positive interior maximum, where
/// values are well-scaled. For a non-centered prior the threshold is zero
/// and the result is flagged instead of bisected.
pub fn reconstruction_threshold(
    prior: &Prior,
    q_tol: f64,
) -> Result<ReconstructionThreshold, ThresholdError> {
    if !prior.is_centered() {
        return Ok(ReconstructionThreshold {
            lambda_c: 0.0,
            prior_centered: false,
        });
    }

    let spectral = spectral_threshold(prior)?;
    let mut hi = 4.0 * spectral;
    let above = |lambda: f64| -> Result<bool, ThresholdError> {
        if lambda > spectral {
            return Ok(true);
        }
        let m = maximize_rs(prior, lambda)?;
        Ok(m.phi_rs > PHI_POSITIVE_TOL && m.q_star > q_tol)
    };
    if !above(hi)? {
        return Err(ThresholdError::BracketFailure {
            lo: 0.0,
            hi,
            at_lo: false,
            at_hi: false,
        });
    }

    let mut lo = 0.0;
    while hi - lo > LAMBDA_BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ReconstructionThreshold {
        lambda_c: 0.5 * (lo + hi),
        prior_centered: true,
    })
}

/// Critical sparsity of the sparse Rademacher family: the boundary between
/// `lambda_c = 1` (at and above) and `lambda_c < 1` (below).
///
/// Uses the equivalence `lambda_c < 1  <=>  phi_RS(1) > 0` (the threshold
/// is also the largest lambda with vanishing RS formula), so each bisection
/// step costs a single maximization at `lambda = 1`.
pub fn rho_star(tol: f64) -> Result<f64, ThresholdError> {
    let gap_at = |rho: f64| -> Result<bool, ThresholdError> {
        let prior = Prior::sparse_rademacher(rho).expect("rho within (0,1]");
        Ok(maximize_rs(&prior, 1.0)?.phi_rs > PHI_POSITIVE_TOL)
    };

    let (mut lo, mut hi) = (0.02, 0.5);
    let (at_lo, at_hi) = (gap_at(lo)?, gap_at(hi)?);
    if !at_lo || at_hi {
        return Err(ThresholdError::BracketFailure {
            lo,
            hi,
            at_lo,
            at_hi,
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if gap_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Evaluates the RS quantities over a lambda grid and attaches both
/// thresholds. Grid points run in parallel; the merge order is the input
/// order.
pub fn rs_report(prior: &Prior, lambda_grid: &[f64]) -> Result<RsReport, ThresholdError> {
    let maxima: Result<Vec<RsMaximum>, ThresholdError> = lambda_grid
        .par_iter()
        .map(|&lambda| maximize_rs(prior, lambda))
        .collect();
    let maxima = maxima?;
    Ok(RsReport {
        lambda_grid: lambda_grid.to_vec(),
        q_star: maxima.iter().map(|m| m.q_star).collect(),
        phi_rs: maxima.iter().map(|m| m.phi_rs).collect(),
        lambda_c: reconstruction_threshold(prior, DEFAULT_Q_TOL)?.lambda_c,
        spectral_threshold: spectral_threshold(prior)?,
    })
}
