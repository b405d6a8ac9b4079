use rand::RngCore;
use rand_distr::{Beta, Distribution};

use super::{top_by_score, Bookkeeping, Policy, PolicyError, PolicyKind};
use crate::model::{Action, Feedback};
use crate::posterior::{ArmPosterior, SamplerStats};
use crate::stats::CounterSet;

/// Thompson sampling from the exact censored-click posterior of every arm.
#[derive(Debug, Clone)]
pub struct PbmTs {
    book: Bookkeeping,
    stats: SamplerStats,
}

impl PbmTs {
    pub fn new(counters: CounterSet) -> Self {
        PbmTs {
            book: Bookkeeping::new(counters),
            stats: SamplerStats::default(),
        }
    }
}

impl Policy for PbmTs {
    fn kind(&self) -> PolicyKind {
        PolicyKind::PbmTs
    }

    fn select_action(&mut self, rng: &mut dyn RngCore) -> Action {
        if self.book.in_warmup() {
            return self.book.warmup_action();
        }
        let c = &self.book.counters;
        let draws: Vec<f64> = (0..c.num_arms())
            .map(|k| ArmPosterior::from_counters(c, k).sample_with_stats(rng, &mut self.stats))
            .collect();
        Action::new(top_by_score(&draws, c.num_positions()))
    }

    fn update(&mut self, action: &Action, feedback: &Feedback) -> Result<(), PolicyError> {
        self.book.record(action, feedback)
    }

    fn counters(&self) -> &CounterSet {
        &self.book.counters
    }

    fn round(&self) -> u64 {
        self.book.round
    }

    fn sampler_stats(&self) -> Option<SamplerStats> {
        Some(self.stats)
    }
}

/// Bias-corrected multiple-play Thompson sampling.
///
/// An approximation: each arm's posterior is replaced by
/// `Beta(S_k + 1, max(N~_k - S_k, 0) + 1)` on pooled, kappa-weighted counts.
#[derive(Debug, Clone)]
pub struct BcMpTs {
    book: Bookkeeping,
}

impl BcMpTs {
    pub fn new(counters: CounterSet) -> Self {
        BcMpTs {
            book: Bookkeeping::new(counters),
        }
    }

    /// Beta parameters used for `arm`.
    pub fn beta_parameters(&self, arm: usize) -> (f64, f64) {
        let c = &self.book.counters;
        let clicks = c.arm_clicks(arm) as f64;
        (clicks + 1.0, (c.weighted_plays(arm) - clicks).max(0.0) + 1.0)
    }
}

impl Policy for BcMpTs {
    fn kind(&self) -> PolicyKind {
        PolicyKind::BcMpTs
    }

    fn select_action(&mut self, mut rng: &mut dyn RngCore) -> Action {
        if self.book.in_warmup() {
            return self.book.warmup_action();
        }
        let c = &self.book.counters;
        let draws: Vec<f64> = (0..c.num_arms())
            .map(|k| {
                let (a, b) = self.beta_parameters(k);
                Beta::new(a, b).expect("parameters are at least one").sample(&mut rng)
            })
            .collect();
        Action::new(top_by_score(&draws, c.num_positions()))
    }

    fn update(&mut self, action: &Action, feedback: &Feedback) -> Result<(), PolicyError> {
        self.book.record(action, feedback)
    }

    fn counters(&self) -> &CounterSet {
        &self.book.counters
    }

    fn round(&self) -> u64 {
        self.book.round
    }
}
