use rand::RngCore;

use super::{top_by_score, Bookkeeping, Policy, PolicyConfig, PolicyError, PolicyKind};
use crate::indices::ucb_index;
use crate::model::{Action, Feedback};
use crate::stats::CounterSet;

/// Sorts Hoeffding indices with `delta = (1 + epsilon) log t` and shows the top `L`.
#[derive(Debug, Clone)]
pub struct PbmUcb {
    config: PolicyConfig,
    book: Bookkeeping,
}

impl PbmUcb {
    pub fn new(config: PolicyConfig, counters: CounterSet) -> Self {
        PbmUcb {
            config,
            book: Bookkeeping::new(counters),
        }
    }

    pub fn indices(&self) -> Vec<f64> {
        let delta = self.config.exploration_rate(self.book.t());
        (0..self.book.counters.num_arms())
            .map(|k| ucb_index(&self.book.counters, k, delta).unwrap_or(f64::INFINITY))
            .collect()
    }
}

impl Policy for PbmUcb {
    fn kind(&self) -> PolicyKind {
        PolicyKind::PbmUcb
    }

    fn select_action(&mut self, _rng: &mut dyn RngCore) -> Action {
        if self.book.in_warmup() {
            return self.book.warmup_action();
        }
        Action::new(top_by_score(&self.indices(), self.book.counters.num_positions()))
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
