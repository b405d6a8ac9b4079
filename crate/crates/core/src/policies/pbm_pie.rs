use rand::{Rng, RngCore};

use super::{top_by_score, Bookkeeping, Policy, PolicyConfig, PolicyError, PolicyKind};
use crate::indices::pie_index_reaches;
use crate::model::{Action, Feedback};
use crate::stats::CounterSet;

/// Parsimonious item exploration for the PBM.
///
/// The top `L - 1` leaders by pooled estimate fill the first positions. The
/// last position shows the `L`-th leader, or with probability 1/2 a uniformly
/// chosen challenger: a non-leader whose KL index reaches the `L`-th leader's
/// estimate.
#[derive(Debug, Clone)]
pub struct PbmPie {
    config: PolicyConfig,
    book: Bookkeeping,
}

impl PbmPie {
    pub fn new(config: PolicyConfig, counters: CounterSet) -> Self {
        PbmPie {
            config,
            book: Bookkeeping::new(counters),
        }
    }

    fn estimates(&self) -> Vec<f64> {
        (0..self.book.counters.num_arms())
            .map(|k| self.book.counters.theta_hat(k).unwrap_or(f64::INFINITY))
            .collect()
    }

    /// Top-`L` arms by raw pooled estimate.
    pub fn leaders(&self) -> Vec<usize> {
        top_by_score(&self.estimates(), self.book.counters.num_positions())
    }

    /// Non-leaders whose index at `delta` reaches the last leader's estimate,
    /// in increasing arm order.
    pub fn challengers(&self, leaders: &[usize], delta: f64) -> Vec<usize> {
        let c = &self.book.counters;
        let last = *leaders.last().expect("at least one position");
        let threshold = c.theta_hat(last).unwrap_or(f64::INFINITY);
        (0..c.num_arms())
            .filter(|k| !leaders.contains(k))
            .filter(|&k| pie_index_reaches(c, k, delta, threshold).unwrap_or(true))
            .collect()
    }

    fn delta(&self) -> f64 {
        self.config.exploration_rate(self.book.t())
    }
}

impl Policy for PbmPie {
    fn kind(&self) -> PolicyKind {
        PolicyKind::PbmPie
    }

    fn select_action(&mut self, rng: &mut dyn RngCore) -> Action {
        if self.book.in_warmup() {
            return self.book.warmup_action();
        }
        let mut arms = self.leaders();
        let challengers = self.challengers(&arms, self.delta());
        if !challengers.is_empty() && rng.random_bool(0.5) {
            let pick = challengers[rng.random_range(0..challengers.len())];
            *arms.last_mut().unwrap() = pick;
        }
        Action::new(arms)
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
