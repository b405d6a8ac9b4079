use rand::{Rng, RngCore};

use super::{Bookkeeping, Policy, PolicyError, PolicyKind};
use crate::indices::{klucb_reaches, klucb_scalar};
use crate::model::{Action, Feedback};
use crate::stats::CounterSet;

/// Ranked bandits: one KL-UCB learner per position.
///
/// Position `l`'s learner picks among all arms. If its pick is already shown
/// higher up, a uniformly random unused arm is displayed instead and the
/// learner is credited a zero reward for its own pick.
#[derive(Debug, Clone)]
pub struct RbaKlUcb {
    book: Bookkeeping,
    pulls: Vec<Vec<u64>>,
    rewards: Vec<Vec<u64>>,
    pending: Option<Vec<Choice>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Choice {
    arm: usize,
    displayed: bool,
}

/// `log t + 3 log log t` for `t >= 3`, zero before.
pub fn klucb_exploration(t: u64) -> f64 {
    if t < 3 {
        return 0.0;
    }
    let log_t = (t as f64).ln();
    log_t + 3.0 * log_t.ln()
}

impl RbaKlUcb {
    pub fn new(counters: CounterSet) -> Self {
        let (k, l) = (counters.num_arms(), counters.num_positions());
        RbaKlUcb {
            book: Bookkeeping::new(counters),
            pulls: vec![vec![0; k]; l],
            rewards: vec![vec![0; k]; l],
            pending: None,
        }
    }

    /// `(pulls, rewards)` of `arm` in the learner at `position`.
    pub fn learner_counts(&self, position: usize, arm: usize) -> (u64, u64) {
        (self.pulls[position][arm], self.rewards[position][arm])
    }

    /// KL-UCB argmax of one position's learner; unpulled arms come first.
    fn pick(&self, position: usize, delta: f64) -> usize {
        let pulls = &self.pulls[position];
        let rewards = &self.rewards[position];
        if let Some(arm) = pulls.iter().position(|&n| n == 0) {
            return arm;
        }
        let mean = |k: usize| rewards[k] as f64 / pulls[k] as f64;
        // start from the best empirical mean so most arms fail the cheap bound
        let mut order: Vec<usize> = (0..pulls.len()).collect();
        order.sort_by(|&a, &b| mean(b).total_cmp(&mean(a)).then(a.cmp(&b)));
        let mut best = order[0];
        let mut best_value = klucb_scalar(mean(best), pulls[best], delta);
        for &k in &order[1..] {
            if !klucb_reaches(mean(k), pulls[k], delta, best_value) {
                continue;
            }
            let value = klucb_scalar(mean(k), pulls[k], delta);
            if value > best_value || (value == best_value && k < best) {
                best = k;
                best_value = value;
            }
        }
        best
    }
}

impl Policy for RbaKlUcb {
    fn kind(&self) -> PolicyKind {
        PolicyKind::RbaKlucb
    }

    fn select_action(&mut self, rng: &mut dyn RngCore) -> Action {
        let (num_arms, num_positions) = (self.book.counters.num_arms(), self.book.counters.num_positions());
        let delta = klucb_exploration(self.book.t());
        let mut shown = Vec::with_capacity(num_positions);
        let mut choices = Vec::with_capacity(num_positions);
        for position in 0..num_positions {
            let arm = self.pick(position, delta);
            if shown.contains(&arm) {
                let unused: Vec<usize> = (0..num_arms).filter(|k| !shown.contains(k)).collect();
                shown.push(unused[rng.random_range(0..unused.len())]);
                choices.push(Choice { arm, displayed: false });
            } else {
                shown.push(arm);
                choices.push(Choice { arm, displayed: true });
            }
        }
        self.pending = Some(choices);
        Action::new(shown)
    }

    fn update(&mut self, action: &Action, feedback: &Feedback) -> Result<(), PolicyError> {
        self.book.record(action, feedback)?;
        let choices = self.pending.take().unwrap_or_else(|| {
            action
                .arms()
                .iter()
                .map(|&arm| Choice { arm, displayed: true })
                .collect()
        });
        for (position, (choice, &click)) in choices.iter().zip(feedback.clicks()).enumerate() {
            self.pulls[position][choice.arm] += 1;
            if choice.displayed && click {
                self.rewards[position][choice.arm] += 1;
            }
        }
        Ok(())
    }

    fn counters(&self) -> &CounterSet {
        &self.book.counters
    }

    fn round(&self) -> u64 {
        self.book.round
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicate_pick_is_credited_zero() {
        let mut policy = RbaKlUcb::new(CounterSet::new(3, vec![0.9, 0.6]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // both learners start by picking arm 0
        let a = policy.select_action(&mut rng);
        assert_eq!(a.arms()[0], 0);
        assert_ne!(a.arms()[1], 0);
        policy.update(&a, &Feedback::new(vec![true, true])).unwrap();
        assert_eq!(policy.learner_counts(0, 0), (1, 1));
        assert_eq!(policy.learner_counts(1, 0), (1, 0));
        // the replacement arm shown at position 2 is not credited
        assert_eq!(policy.learner_counts(1, a.arms()[1]), (0, 0));
    }

    #[test]
    fn pick_matches_plain_argmax() {
        let mut policy = RbaKlUcb::new(CounterSet::new(5, vec![0.9]));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for round in 0..3000u64 {
            let delta = klucb_exploration(round + 1);
            let fast = policy.pick(0, delta);
            let brute = (0..5)
                .map(|k| {
                    let (n, s) = policy.learner_counts(0, k);
                    if n == 0 { f64::INFINITY } else { klucb_scalar(s as f64 / n as f64, n, delta) }
                })
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best })
                .0;
            assert_eq!(fast, brute, "round {round}");
            let a = policy.select_action(&mut rng);
            let z = Feedback::new(vec![rng.random_bool(0.1 * (a.arms()[0] + 1) as f64)]);
            policy.update(&a, &z).unwrap();
        }
    }

    #[test]
    fn exploration_rate_schedule() {
        assert_eq!(klucb_exploration(1), 0.0);
        assert_eq!(klucb_exploration(2), 0.0);
        let t = 100f64;
        assert!((klucb_exploration(100) - (t.ln() + 3.0 * t.ln().ln())).abs() < 1e-12);
    }
}
