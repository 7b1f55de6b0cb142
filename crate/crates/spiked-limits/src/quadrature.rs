//! Gauss-Hermite quadrature calibrated to the standard normal weight.
//!
//! Nodes and weights come from the Golub-Welsch construction: the Jacobi
//! matrix of the probabilists' Hermite recurrence (`He_{k+1} = x He_k -
//! k He_{k-1}`) is symmetric tridiagonal with zero diagonal and
//! off-diagonals `sqrt(k)`; its eigenvalues are the nodes and the squared
//! first eigenvector components are the weights. A rule of order `n`
//! integrates polynomials of degree `2n - 1` against the N(0,1) density
//! exactly, and the weights sum to one by construction.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature order must be positive")]
    ZeroOrder,

    #[error("QL iteration failed to converge for order {0}")]
    NoConvergence(usize),
}

/// A fixed-order rule for expectations against the standard normal density.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    order: usize,
}

impl QuadratureRule {
    /// Builds an order-`n` rule for the N(0,1) weight function.
    pub fn standard_normal(order: usize) -> Result<Self, QuadratureError> {
        if order == 0 {
            return Err(QuadratureError::ZeroOrder);
        }
        let diag = vec![0.0; order];
        let mut off = vec![0.0; order];
        for (k, e) in off.iter_mut().enumerate().take(order - 1) {
            *e = ((k + 1) as f64).sqrt();
        }
        let (nodes, first_components) =
            tridiagonal_eigen_first_row(diag, off).ok_or(QuadratureError::NoConvergence(order))?;
        let weights = first_components.iter().map(|v| v * v).collect();
        Ok(Self {
            nodes,
            weights,
            order,
        })
    }

    /// `sum_i w_i f(x_i)`, an approximation of `E[f(Z)]` for `Z ~ N(0,1)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Shared cache of rules; free-energy evaluations request the same handful
/// of orders millions of times.
pub fn cached_standard_normal(order: usize) -> Result<Arc<QuadratureRule>, QuadratureError> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    if let Some(rule) = guard.get(&order) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(QuadratureRule::standard_normal(order)?);
    guard.insert(order, Arc::clone(&rule));
    Ok(rule)
}

/// Implicit-shift QL for a symmetric tridiagonal matrix, tracking only the
/// first row of the accumulated eigenvector matrix (all Golub-Welsch needs).
/// Returns eigenvalues in ascending order with the matching first
/// components, or `None` if an eigenvalue fails to deflate.
fn tridiagonal_eigen_first_row(mut d: Vec<f64>, mut e: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    const MAX_SWEEPS: usize = 50;
    let n = d.len();
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    if n == 1 {
        return Some((d, z));
    }

    for l in 0..n {
        let mut iter = 0;
        loop {
            // Look for a negligible off-diagonal element to split at.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                return None;
            }

            // Wilkinson-style shift from the top 2x2.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;

            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;

                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if r == 0.0 && i > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let nodes = idx.iter().map(|&i| d[i]).collect();
    let first = idx.iter().map(|&i| z[i]).collect();
    Some((nodes, first))
}
