use rand::seq::index::sample;
use rand::RngCore;

use super::{Bookkeeping, Policy, PolicyError, PolicyKind};
use crate::model::{Action, Feedback};
use crate::stats::CounterSet;

/// Uniformly random ordered list of distinct arms; the reference baseline.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    book: Bookkeeping,
}

impl UniformRandom {
    pub fn new(counters: CounterSet) -> Self {
        UniformRandom {
            book: Bookkeeping::new(counters),
        }
    }
}

impl Policy for UniformRandom {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn select_action(&mut self, mut rng: &mut dyn RngCore) -> Action {
        let c = &self.book.counters;
        Action::new(sample(&mut rng, c.num_arms(), c.num_positions()).into_vec())
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
