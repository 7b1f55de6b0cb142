//! Detection and estimation limits of the rank-one spiked Wigner model.
//!
//! The observation is a symmetric noise matrix plus a rank-one spike
//! `sqrt(lambda/N) x* x*^T`, with the spike entries i.i.d. from a bounded
//! discrete prior. The crate computes the information-theoretic side of
//! the story (scalar-channel free energies, the replica-symmetric formula
//! and its thresholds, the limiting laws of the log-likelihood ratio) and
//! verifies it empirically (exact and Monte Carlo likelihood ratios on
//! simulated matrices, posterior overlap measurements, replicated
//! experiment runners).
//!
//! - [`prior`]: discrete spike priors and exact moments.
//! - [`quadrature`], [`channel`]: Gauss-Hermite rules and the scalar
//!   Gaussian-channel free energies.
//! - [`threshold`]: the RS potential, its maximizer, and the
//!   reconstruction/spectral thresholds.
//! - [`detection`]: closed-form limits for testing below the threshold.
//! - [`sim`]: observation sampling, exact/MC log-likelihood ratios, and
//!   Gibbs-posterior overlap moments.
//! - [`experiments`]: replicated desk-scale experiments against the
//!   limiting theory.
pub mod channel;
pub mod detection;
pub mod experiments;
pub mod prior;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod threshold;
