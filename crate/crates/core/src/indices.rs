//! Upper confidence indices for arm attraction probabilities.
//!
//! * [`ucb_index`]: Hoeffding-type bonus around the pooled estimator.
//! * [`pie_index`]: multi-position KL index, the largest `q >= theta_min`
//!   with `Phi(q) = sum_l N_l d(S_l / N_l, kappa_l q) <= delta`.
//! * [`klucb_scalar`]: classic single-sample KL-UCB, used per position by RBA.

use thiserror::Error;

use crate::model::kl_bernoulli;
use crate::roots::{bisect_level, bisect_sign, golden_section_min};
use crate::stats::CounterSet;

/// Tolerance on the index argument.
pub const INDEX_TOL: f64 = 1e-9;
/// Tolerance on `delta - Phi(index)` for interior indices.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Tolerance on the location of `theta_min`.
pub const MIN_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("arm {arm} has not been played")]
    NoData { arm: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexResult {
    pub value: f64,
    /// The confidence set reaches 1 (`Phi(1) <= delta`).
    pub at_boundary: bool,
}

/// `S_k / N~_k + sqrt(N_k / N~_k) * sqrt(delta / (2 N~_k))`, not clipped.
pub fn ucb_index(counters: &CounterSet, arm: usize, delta: f64) -> Result<f64, IndexError> {
    let weighted = counters.weighted_plays(arm);
    if weighted <= 0.0 {
        return Err(IndexError::NoData { arm });
    }
    let plays = counters.arm_plays(arm) as f64;
    let mean = counters.arm_clicks(arm) as f64 / weighted;
    Ok(mean + (plays / weighted).sqrt() * (delta / (2.0 * weighted)).sqrt())
}

/// Active positions of one arm as `(N, S, kappa)`.
#[derive(Debug, Clone)]
struct ArmCells {
    cells: Vec<(f64, f64, f64)>,
    total_clicks: f64,
}

impl ArmCells {
    fn new(counters: &CounterSet, arm: usize) -> Self {
        let cells: Vec<(f64, f64, f64)> = counters
            .arm_plays_by_position(arm)
            .iter()
            .zip(counters.arm_clicks_by_position(arm))
            .zip(counters.kappa())
            .filter(|((&n, _), _)| n > 0)
            .map(|((&n, &s), &kappa)| (n as f64, s as f64, kappa))
            .collect();
        let total_clicks = cells.iter().map(|c| c.1).sum();
        ArmCells { cells, total_clicks }
    }

    fn phi(&self, q: f64) -> f64 {
        self.cells
            .iter()
            .map(|&(n, s, kappa)| n * kl_bernoulli(s / n, kappa * q))
            .sum()
    }

    /// `q * Phi'(q)`, which has the sign of `Phi'` and is nondecreasing.
    fn scaled_slope(&self, q: f64) -> f64 {
        let misses: f64 = self
            .cells
            .iter()
            .map(|&(n, s, kappa)| {
                let unclicked = n - s;
                if unclicked == 0.0 {
                    0.0
                } else {
                    kappa * unclicked / (1.0 - kappa * q)
                }
            })
            .sum();
        q * misses - self.total_clicks
    }

    fn theta_min(&self) -> f64 {
        if self.total_clicks == 0.0 {
            return 0.0;
        }
        // +inf at q = 1 when a kappa = 1 position has misses
        if self.scaled_slope(1.0) <= 0.0 {
            return 1.0;
        }
        bisect_sign(|q| self.scaled_slope(q), 0.0, 1.0, MIN_TOL)
            .unwrap_or_else(|| golden_section_min(|q| self.phi(q), 0.0, 1.0, MIN_TOL).0)
    }
}

/// `Phi(q)` for one arm. Positions never played contribute nothing.
pub fn phi(counters: &CounterSet, arm: usize, q: f64) -> f64 {
    ArmCells::new(counters, arm).phi(q)
}

/// Minimiser of `Phi` on `[0, 1]` and the minimum value.
pub fn phi_min(counters: &CounterSet, arm: usize) -> Result<(f64, f64), IndexError> {
    let cells = ArmCells::new(counters, arm);
    if cells.cells.is_empty() {
        return Err(IndexError::NoData { arm });
    }
    let q = cells.theta_min();
    Ok((q, cells.phi(q)))
}

/// `sup { q in [theta_min, 1] : Phi(q) <= delta }`.
///
/// When `Phi(theta_min)` already exceeds `delta` the set is empty and
/// `theta_min` itself is returned.
pub fn pie_index(counters: &CounterSet, arm: usize, delta: f64) -> Result<IndexResult, IndexError> {
    let cells = ArmCells::new(counters, arm);
    if cells.cells.is_empty() {
        return Err(IndexError::NoData { arm });
    }
    Ok(pie_index_cells(&cells, delta))
}

fn pie_index_cells(cells: &ArmCells, delta: f64) -> IndexResult {
    if cells.phi(1.0) <= delta {
        return IndexResult { value: 1.0, at_boundary: true };
    }
    let lower = cells.theta_min();
    if cells.phi(lower) >= delta {
        return IndexResult { value: lower, at_boundary: false };
    }
    let value = bisect_level(|q| cells.phi(q), lower, 1.0, delta, INDEX_TOL, RESIDUAL_TOL);
    IndexResult { value, at_boundary: false }
}

/// Whether `pie_index(arm, delta) >= threshold`.
///
/// Arms provably below the threshold (`Phi` already increasing and above
/// `delta` there) are rejected without solving for the index.
pub fn pie_index_reaches(counters: &CounterSet, arm: usize, delta: f64, threshold: f64) -> Result<bool, IndexError> {
    let cells = ArmCells::new(counters, arm);
    if cells.cells.is_empty() {
        return Err(IndexError::NoData { arm });
    }
    if threshold > 1.0 {
        return Ok(false);
    }
    if threshold > 0.0 && cells.scaled_slope(threshold) > 0.0 && cells.phi(threshold) > delta {
        return Ok(false);
    }
    Ok(pie_index_cells(&cells, delta).value >= threshold)
}

/// `max { q in [p_hat, 1] : n d(p_hat, q) <= delta }`.
pub fn klucb_scalar(p_hat: f64, n: u64, delta: f64) -> f64 {
    let p = p_hat.clamp(0.0, 1.0);
    if p >= 1.0 || delta <= 0.0 {
        return p;
    }
    let n = n as f64;
    bisect_level(|q| n * kl_bernoulli(p, q), p, 1.0, delta, INDEX_TOL, RESIDUAL_TOL)
}

/// Whether `klucb_scalar(p_hat, n, delta) >= threshold`, without bisection
/// when the answer is no.
pub fn klucb_reaches(p_hat: f64, n: u64, delta: f64, threshold: f64) -> bool {
    let p = p_hat.clamp(0.0, 1.0);
    if threshold <= p {
        return true;
    }
    if n as f64 * kl_bernoulli(p, threshold) > delta {
        return false;
    }
    klucb_scalar(p, n, delta) >= threshold
}
