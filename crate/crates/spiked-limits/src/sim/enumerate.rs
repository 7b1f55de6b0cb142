//! Exhaustive configuration enumeration in reflected Gray order.
//!
//! Successive configurations differ in a single coordinate, and the changed
//! digit moves by one atom index, so the posterior exponent can be updated
//! in O(n) per step instead of recomputed.

use crate::prior::Prior;

use super::Observation;

/// Loopless reflected mixed-radix Gray generator (fixed radix per digit).
pub(crate) struct GrayEnumerator {
    radix: usize,
    digits: Vec<usize>,
    focus: Vec<usize>,
    dir: Vec<isize>,
}

impl GrayEnumerator {
    pub fn new(radix: usize, n: usize) -> Self {
        assert!(radix >= 1 && n >= 1);
        let mut focus: Vec<usize> = (0..=n).collect();
        if radix == 1 {
            // Single-configuration sequence: no digit can ever move.
            focus[0] = n;
        }
        Self {
            radix,
            digits: vec![0; n],
            focus,
            dir: vec![1; n],
        }
    }

    #[cfg(test)]
    pub fn digits(&self) -> &[usize] {
        &self.digits
    }

    /// Advances to the next configuration. Returns the changed site with
    /// its old and new digit, or `None` once the sequence is exhausted.
    pub fn step(&mut self) -> Option<(usize, usize, usize)> {
        let n = self.digits.len();
        let j = self.focus[0];
        self.focus[0] = 0;
        if j == n {
            return None;
        }
        let old = self.digits[j];
        let new = (old as isize + self.dir[j]) as usize;
        self.digits[j] = new;
        if new == 0 || new == self.radix - 1 {
            self.dir[j] = -self.dir[j];
            self.focus[j] = self.focus[j + 1];
            self.focus[j + 1] = j + 1;
        }
        Some((j, old, new))
    }
}

/// Posterior exponent and prior log-weight of the current configuration,
/// maintained incrementally along a Gray walk.
pub(crate) struct ConfigState<'a> {
    obs: &'a Observation,
    lambda: f64,
    scale: f64,
    atoms: &'a [f64],
    ln_weights: Vec<f64>,
    /// Atom value at each site.
    x: Vec<f64>,
    /// `fields[i] = scale * sum_{j != i} Y_ij x_j`.
    fields: Vec<f64>,
    pair: f64,
    s2: f64,
    s4: f64,
    diag_lin: f64,
    log_weight: f64,
}

impl<'a> ConfigState<'a> {
    /// State for the all-zeros digit configuration (every site at atom 0).
    pub fn new(obs: &'a Observation, lambda: f64, prior: &'a Prior) -> Self {
        let n = obs.n();
        let atoms = prior.atoms();
        let ln_weights: Vec<f64> = prior.weights().iter().map(|w| w.ln()).collect();
        let mut state = Self {
            obs,
            lambda,
            scale: (lambda / n as f64).sqrt(),
            atoms,
            ln_weights: ln_weights.clone(),
            x: vec![atoms[0]; n],
            fields: vec![0.0; n],
            pair: 0.0,
            s2: 0.0,
            s4: 0.0,
            diag_lin: 0.0,
            log_weight: ln_weights[0] * n as f64,
        };
        let a0 = atoms[0];
        for i in 0..n {
            for j in (i + 1)..n {
                let y = state.scale * obs.upper_at(i, j);
                state.fields[i] += y * a0;
                state.fields[j] += y * a0;
                state.pair += y * a0 * a0;
            }
        }
        state.s2 = a0 * a0 * n as f64;
        state.s4 = a0.powi(4) * n as f64;
        if let Some(diag) = obs.diag() {
            state.diag_lin = state.scale * a0 * a0 * diag.iter().sum::<f64>();
        }
        state
    }

    /// Applies a single-digit Gray step at `site`.
    pub fn apply(&mut self, site: usize, old_digit: usize, new_digit: usize) {
        let old = self.atoms[old_digit];
        let new = self.atoms[new_digit];
        let delta = new - old;

        self.pair += delta * self.fields[site];
        let n = self.obs.n();
        for k in 0..n {
            if k != site {
                let (i, j) = if k < site { (k, site) } else { (site, k) };
                self.fields[k] += self.scale * self.obs.upper_at(i, j) * delta;
            }
        }
        self.s2 += new * new - old * old;
        self.s4 += new.powi(4) - old.powi(4);
        if let Some(diag) = self.obs.diag() {
            self.diag_lin += self.scale * diag[site] * (new * new - old * old);
        }
        self.log_weight += self.ln_weights[new_digit] - self.ln_weights[old_digit];
        self.x[site] = new;
    }

    /// `-H(x)` for the current configuration.
    pub fn exponent(&self) -> f64 {
        let half_lambda_over_n = self.lambda / (2.0 * self.obs.n() as f64);
        let quartic_pairs = (self.s2 * self.s2 - self.s4) / 2.0;
        let mut e = self.pair - half_lambda_over_n * quartic_pairs;
        if self.obs.diag().is_some() {
            e += (self.diag_lin - half_lambda_over_n * self.s4)
                / (self.obs.sigma() * self.obs.sigma());
        }
        e
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }
}
