//! Exact posterior of one arm's attraction probability under censored clicks.
//!
//! With a flat prior the posterior density is proportional to
//! `prod_l theta^alpha_l (1 - kappa_l theta)^beta_l` on `(0, 1)`, where
//! `alpha_l` counts clicks and `beta_l` non-clicks at position `l`. It is not
//! a standard family, so draws go through rejection sampling with a scaled
//! beta proposal built from the best-observed position.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::roots::bisect_sign;
use crate::stats::CounterSet;

/// Safety margin on the envelope constant (`log 1.05`).
pub const ENVELOPE_MARGIN: f64 = 0.048_790_164_169_432_0;
/// Proposals rejected before switching to the grid sampler.
pub const MAX_REJECTIONS: u32 = 10_000;
/// Cells in the fallback inverse-CDF grid.
pub const FALLBACK_GRID: usize = 8192;

const STATIONARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmPosterior {
    alpha: Vec<u64>,
    beta: Vec<u64>,
    kappa: Vec<f64>,
}

/// Running counts of sampler behaviour.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub draws: u64,
    pub proposals: u64,
    pub fallbacks: u64,
}

impl SamplerStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            return 1.0;
        }
        (self.draws - self.fallbacks) as f64 / self.proposals as f64
    }

    pub fn merge(&mut self, other: &SamplerStats) {
        self.draws += other.draws;
        self.proposals += other.proposals;
        self.fallbacks += other.fallbacks;
    }
}

#[derive(Debug, Clone)]
struct Proposal {
    position: usize,
    kappa: f64,
    beta: Option<Beta<f64>>,
    log_envelope: f64,
}

impl ArmPosterior {
    /// Panics if the three vectors differ in length.
    pub fn new(alpha: Vec<u64>, beta: Vec<u64>, kappa: Vec<f64>) -> Self {
        assert!(alpha.len() == kappa.len() && beta.len() == kappa.len());
        ArmPosterior { alpha, beta, kappa }
    }

    pub fn from_counters(counters: &CounterSet, arm: usize) -> Self {
        let alpha = counters.arm_clicks_by_position(arm).to_vec();
        let beta = counters
            .arm_plays_by_position(arm)
            .iter()
            .zip(&alpha)
            .map(|(&n, &s)| n - s)
            .collect();
        ArmPosterior::new(alpha, beta, counters.kappa().to_vec())
    }

    pub fn alpha(&self) -> &[u64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[u64] {
        &self.beta
    }

    /// `sum_l alpha_l log theta + beta_l log(1 - kappa_l theta)`.
    pub fn log_density_unnorm(&self, theta: f64) -> f64 {
        self.partial_log_density(theta, None)
    }

    fn partial_log_density(&self, theta: f64, skip: Option<usize>) -> f64 {
        let mut clicks = 0u64;
        let mut value = 0.0;
        for (l, ((&a, &b), &kappa)) in self.alpha.iter().zip(&self.beta).zip(&self.kappa).enumerate() {
            if Some(l) == skip {
                continue;
            }
            clicks += a;
            if b > 0 {
                value += b as f64 * (1.0 - kappa * theta).ln();
            }
        }
        if clicks > 0 {
            value += clicks as f64 * theta.ln();
        }
        value
    }

    /// Position whose data shapes the proposal: most observations, ties to the top.
    pub fn proposal_position(&self) -> usize {
        let mut best = 0;
        for l in 1..self.kappa.len() {
            if self.alpha[l] + self.beta[l] > self.alpha[best] + self.beta[best] {
                best = l;
            }
        }
        best
    }

    /// `log target - log proposal` up to a constant: the kernel of every
    /// position except the proposal one.
    pub fn log_proposal_ratio(&self, theta: f64) -> f64 {
        self.partial_log_density(theta, Some(self.proposal_position()))
    }

    /// Envelope constant `M` with `log_proposal_ratio <= M` on `(0, 1]`.
    ///
    /// The ratio is concave, so its maximum is the root of its derivative
    /// (or an end point); the margin absorbs the root's tolerance.
    pub fn log_envelope(&self) -> f64 {
        self.ratio_maximum() + ENVELOPE_MARGIN
    }

    fn ratio_maximum(&self) -> f64 {
        let m = self.proposal_position();
        let others = || (0..self.kappa.len()).filter(move |&l| l != m);
        let clicks: f64 = others().map(|l| self.alpha[l] as f64).sum();
        let misses_slope = |q: f64| -> f64 {
            others()
                .filter(|&l| self.beta[l] > 0)
                .map(|l| self.kappa[l] * self.beta[l] as f64 / (1.0 - self.kappa[l] * q))
                .sum()
        };
        if clicks == 0.0 {
            // nonincreasing; supremum at theta -> 0 where every term vanishes
            return 0.0;
        }
        // sign of theta * ratio'(theta) is that of clicks - theta * misses_slope(theta)
        let scaled = |q: f64| q * misses_slope(q) - clicks;
        let at_one = scaled(1.0);
        let argmax = if at_one <= 0.0 {
            1.0
        } else {
            bisect_sign(scaled, 0.0, 1.0, STATIONARY_TOL).unwrap_or(1.0)
        };
        let value = self.log_proposal_ratio(argmax);
        if value.is_finite() {
            value
        } else {
            // argmax collapsed onto a pole; back off to the nearest finite point
            self.log_proposal_ratio(argmax.min(1.0 - 1e-12).max(1e-12))
        }
    }

    fn proposal(&self) -> Proposal {
        let position = self.proposal_position();
        let a = self.alpha[position] as f64 + 1.0;
        let b = self.beta[position] as f64 + 1.0;
        Proposal {
            position,
            kappa: self.kappa[position],
            beta: Beta::new(a, b).ok(),
            log_envelope: self.log_envelope(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_with_stats(rng, &mut SamplerStats::default())
    }

    /// Rejection sampler; after [`MAX_REJECTIONS`] misses it draws from the
    /// grid inverse CDF instead and counts a fallback.
    pub fn sample_with_stats<R: Rng + ?Sized>(&self, rng: &mut R, stats: &mut SamplerStats) -> f64 {
        stats.draws += 1;
        let proposal = self.proposal();
        debug_assert_eq!(proposal.position, self.proposal_position());
        if let Some(beta) = proposal.beta {
            for _ in 0..MAX_REJECTIONS {
                stats.proposals += 1;
                let theta = beta.sample(rng) / proposal.kappa;
                if !(theta > 0.0 && theta <= 1.0) {
                    continue;
                }
                let log_accept = self.log_proposal_ratio(theta) - proposal.log_envelope;
                let u: f64 = rng.random();
                if u.ln() <= log_accept {
                    return theta;
                }
            }
        }
        stats.fallbacks += 1;
        self.sample_grid(rng, FALLBACK_GRID)
    }

    /// Inverse-CDF draw from the density discretised on `cells` equal bins.
    pub fn sample_grid<R: Rng + ?Sized>(&self, rng: &mut R, cells: usize) -> f64 {
        let log_mass: Vec<f64> = (0..cells)
            .map(|i| self.log_density_unnorm((i as f64 + 0.5) / cells as f64))
            .collect();
        let top = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cumulative = Vec::with_capacity(cells);
        let mut total = 0.0;
        for lm in &log_mass {
            total += (lm - top).exp();
            cumulative.push(total);
        }
        let target = rng.random::<f64>() * total;
        let bin = cumulative.partition_point(|&c| c <= target).min(cells - 1);
        let below = if bin == 0 { 0.0 } else { cumulative[bin - 1] };
        let width = cumulative[bin] - below;
        let frac = if width > 0.0 { (target - below) / width } else { 0.5 };
        (bin as f64 + frac) / cells as f64
    }
}
