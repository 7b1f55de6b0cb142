//! Discrete spike priors on a bounded support.
//!
//! A [`Prior`] is a finite probability measure given by support atoms and
//! weights. All downstream quantities (scalar-channel free energies, exact
//! likelihood ratios, posterior enumerations) reduce to finite sums over the
//! atoms, so moments are exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for normalization and for the centered / unit-variance flags.
pub const MOMENT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("atoms and weights must have the same nonzero length ({atoms} vs {weights})")]
    LengthMismatch { atoms: usize, weights: usize },

    #[error("weight {0} is negative")]
    NegativeWeight(f64),

    #[error("total mass is zero")]
    ZeroMass,

    #[error("duplicate atom {0}")]
    DuplicateAtom(f64),

    #[error("atom or weight is not finite")]
    NonFinite,

    #[error("sparsity {0} outside (0, 1]")]
    SparsityOutOfRange(f64),
}

/// A finite discrete probability measure on the real line.
///
/// Weights are normalized once at construction and never re-normalized
/// afterwards. Atoms with zero weight are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    support_radius: f64,
    centered: bool,
    unit_variance: bool,
}

impl Prior {
    /// Builds a prior from support points and (unnormalized) weights.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, PriorError> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(PriorError::LengthMismatch {
                atoms: atoms.len(),
                weights: weights.len(),
            });
        }
        if atoms.iter().chain(weights.iter()).any(|v| !v.is_finite()) {
            return Err(PriorError::NonFinite);
        }
        if let Some(&w) = weights.iter().find(|&&w| w < 0.0) {
            return Err(PriorError::NegativeWeight(w));
        }
        let mass: f64 = weights.iter().sum();
        if mass <= 0.0 {
            return Err(PriorError::ZeroMass);
        }

        let mut pairs: Vec<(f64, f64)> = atoms
            .into_iter()
            .zip(weights)
            .filter(|&(_, w)| w > 0.0)
            .map(|(a, w)| (a, w / mass))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        for pair in pairs.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(PriorError::DuplicateAtom(pair[0].0));
            }
        }

        let (atoms, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let support_radius = atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let mean: f64 = atoms.iter().zip(&weights).map(|(a, w)| a * w).sum();
        let second: f64 = atoms.iter().zip(&weights).map(|(a, w)| a * a * w).sum();

        Ok(Self {
            atoms,
            weights,
            support_radius,
            centered: mean.abs() <= MOMENT_TOL,
            unit_variance: (second - 1.0).abs() <= MOMENT_TOL,
        })
    }

    /// Symmetric two-point prior on {-1, +1}.
    pub fn rademacher() -> Self {
        Self::new(vec![-1.0, 1.0], vec![0.5, 0.5]).expect("static construction")
    }

    /// Three-point prior with mass `1 - rho` at zero and `rho / 2` at
    /// `±1/√rho`. Centered with unit variance for every `rho`; at `rho = 1`
    /// the zero atom carries no mass and the prior collapses to
    /// [`Prior::rademacher`].
    pub fn sparse_rademacher(rho: f64) -> Result<Self, PriorError> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(PriorError::SparsityOutOfRange(rho));
        }
        let spike = rho.sqrt().recip();
        Self::new(
            vec![-spike, 0.0, spike],
            vec![rho / 2.0, 1.0 - rho, rho / 2.0],
        )
    }

    /// k-th raw moment, as an exact finite sum.
    pub fn moment(&self, k: u32) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * a.powi(k as i32))
            .sum()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// True iff the mean is zero within [`MOMENT_TOL`].
    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// True iff the second moment is one within [`MOMENT_TOL`].
    pub fn has_unit_variance(&self) -> bool {
        self.unit_variance
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Cumulative weights, for inverse-CDF sampling.
    pub(crate) fn cumulative_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cum: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        cum
    }
}

/// Wire format: `{"atoms": [...], "weights": [...]}`. Deserialization runs
/// the full validation in [`Prior::new`].
#[derive(Serialize, Deserialize)]
struct PriorSpec {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl Serialize for Prior {
    fn serialize<S>(&self, serializer: S) -> Result<S::Ok, S::Error>
    where
        S: serde::Serializer,
    {
        PriorSpec {
            atoms: self.atoms.clone(),
            weights: self.weights.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Prior {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let spec = PriorSpec::deserialize(deserializer)?;
        Prior::new(spec.atoms, spec.weights).map_err(serde::de::Error::custom)
    }
}
