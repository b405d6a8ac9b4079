//! Learning policies for the multiple-play PBM bandit.
//!
//! Every policy follows the same loop: [`Policy::select_action`], show the
//! list, then [`Policy::update`] with the censored clicks. Policies that need
//! every arm observed at every position start with `K` round-robin rounds,
//! round `i` displaying arms `i, i+1, ..., i+L-1` (mod `K`).
//!
//! Ties between arms always go to the smaller index.

mod pbm_pie;
mod pbm_ucb;
mod rba;
mod thompson;
mod uniform;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, Feedback, ModelError};
use crate::posterior::SamplerStats;
use crate::stats::{CounterSet, StatsError};

pub use pbm_pie::PbmPie;
pub use pbm_ucb::PbmUcb;
pub use rba::RbaKlUcb;
pub use thompson::{BcMpTs, PbmTs};
pub use uniform::UniformRandom;

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid policy configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    PbmUcb,
    PbmPie,
    PbmTs,
    BcMpTs,
    RbaKlucb,
    Random,
}

/// Which time index drives `delta = (1 + epsilon) log(.)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonMode {
    /// Current round `t`.
    #[default]
    AnytimeLogT,
    /// Fixed horizon `T`.
    FixedHorizonLogT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub horizon_mode: HorizonMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_t: Option<u64>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            kind,
            epsilon: DEFAULT_EPSILON,
            horizon_mode: HorizonMode::AnytimeLogT,
            horizon_t: None,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(PolicyError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        match (self.horizon_mode, self.horizon_t) {
            (HorizonMode::FixedHorizonLogT, None) => {
                Err(PolicyError::Config("horizon_t is required with fixed_horizon_log_t".into()))
            }
            (HorizonMode::FixedHorizonLogT, Some(0)) => Err(PolicyError::Config("horizon_t must be positive".into())),
            (HorizonMode::AnytimeLogT, Some(_)) => {
                Err(PolicyError::Config("horizon_t is only allowed with fixed_horizon_log_t".into()))
            }
            _ => Ok(()),
        }
    }

    /// `(1 + epsilon) log t`, or `log T` in fixed-horizon mode.
    pub fn exploration_rate(&self, t: u64) -> f64 {
        let time = match (self.horizon_mode, self.horizon_t) {
            (HorizonMode::FixedHorizonLogT, Some(horizon)) => horizon,
            _ => t,
        };
        (1.0 + self.epsilon) * (time.max(1) as f64).ln()
    }

    /// Instantiates the policy for `num_arms` arms and the given examination
    /// probabilities (one per position).
    pub fn build(&self, num_arms: usize, kappa: &[f64]) -> Result<Box<dyn Policy>, PolicyError> {
        self.validate()?;
        if kappa.is_empty() || kappa.len() > num_arms {
            return Err(PolicyError::Config(format!(
                "need 1 <= L <= K, got K={num_arms}, L={}",
                kappa.len()
            )));
        }
        let counters = CounterSet::new(num_arms, kappa.to_vec());
        Ok(match self.kind {
            PolicyKind::PbmUcb => Box::new(PbmUcb::new(self.clone(), counters)),
            PolicyKind::PbmPie => Box::new(PbmPie::new(self.clone(), counters)),
            PolicyKind::PbmTs => Box::new(PbmTs::new(counters)),
            PolicyKind::BcMpTs => Box::new(BcMpTs::new(counters)),
            PolicyKind::RbaKlucb => Box::new(RbaKlUcb::new(counters)),
            PolicyKind::Random => Box::new(UniformRandom::new(counters)),
        })
    }
}

/// Stateful decision contract shared by all learners.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    /// Chooses the list for the current round.
    fn select_action(&mut self, rng: &mut dyn RngCore) -> Action;

    /// Records the clicks observed for `action`, the list returned by the
    /// latest [`select_action`](Self::select_action).
    fn update(&mut self, action: &Action, feedback: &Feedback) -> Result<(), PolicyError>;

    fn counters(&self) -> &CounterSet;

    /// Number of updates received so far.
    fn round(&self) -> u64;

    fn sampler_stats(&self) -> Option<SamplerStats> {
        None
    }
}

/// Round-robin warm-up list for `round < K`.
pub fn initialization_action(round: u64, num_arms: usize, num_positions: usize) -> Action {
    let start = (round % num_arms as u64) as usize;
    Action::new((0..num_positions).map(|l| (start + l) % num_arms).collect())
}

/// Indices of the `count` largest scores, largest first, ties to the smaller index.
pub fn top_by_score(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

/// Shared bookkeeping: counters plus the round counter.
#[derive(Debug, Clone)]
pub(crate) struct Bookkeeping {
    pub counters: CounterSet,
    pub round: u64,
}

impl Bookkeeping {
    pub fn new(counters: CounterSet) -> Self {
        Bookkeeping { counters, round: 0 }
    }

    pub fn in_warmup(&self) -> bool {
        self.round < self.counters.num_arms() as u64
    }

    pub fn warmup_action(&self) -> Action {
        initialization_action(self.round, self.counters.num_arms(), self.counters.num_positions())
    }

    /// 1-based index of the round being played.
    pub fn t(&self) -> u64 {
        self.round + 1
    }

    pub fn record(&mut self, action: &Action, feedback: &Feedback) -> Result<(), PolicyError> {
        self.counters.update(action, feedback)?;
        self.round += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PbmModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ALL_KINDS: [PolicyKind; 6] = [
        PolicyKind::PbmUcb,
        PolicyKind::PbmPie,
        PolicyKind::PbmTs,
        PolicyKind::BcMpTs,
        PolicyKind::RbaKlucb,
        PolicyKind::Random,
    ];

    fn paper_model() -> PbmModel {
        PbmModel::new(vec![0.45, 0.35, 0.25, 0.15, 0.05], vec![0.9, 0.6, 0.3]).unwrap()
    }

    fn run(kind: PolicyKind, seed: u64, rounds: u64) -> (Vec<Action>, Box<dyn Policy>) {
        let model = paper_model();
        let mut policy = PolicyConfig::new(kind).build(5, model.kappa()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actions = Vec::new();
        for _ in 0..rounds {
            let a = policy.select_action(&mut rng);
            let z = model.sample_feedback(&a, &mut rng);
            policy.update(&a, &z).unwrap();
            actions.push(a);
        }
        (actions, policy)
    }

    #[test]
    fn warmup_covers_every_cell() {
        let mut c = CounterSet::new(5, vec![0.9, 0.6, 0.3]);
        for round in 0..5 {
            let a = initialization_action(round, 5, 3);
            c.update(&a, &Feedback::new(vec![false; 3])).unwrap();
        }
        for k in 0..5 {
            for l in 0..3 {
                assert_eq!(c.plays(k, l), 1);
            }
        }
    }

    #[test]
    fn actions_are_valid_and_counts_conserved() {
        for kind in ALL_KINDS {
            let (actions, policy) = run(kind, 5, 2000);
            for a in &actions {
                a.validate(5, 3).unwrap();
            }
            assert_eq!(policy.counters().total_plays(), 2000 * 3, "{kind:?}");
            assert_eq!(policy.round(), 2000);
        }
    }

    #[test]
    fn replay_is_deterministic() {
        for kind in ALL_KINDS {
            assert_eq!(run(kind, 99, 500).0, run(kind, 99, 500).0, "{kind:?}");
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = PolicyConfig::new(PolicyKind::PbmPie);
        cfg.horizon_mode = HorizonMode::FixedHorizonLogT;
        assert!(cfg.validate().is_err());
        cfg.horizon_t = Some(1000);
        cfg.validate().unwrap();
        assert!((cfg.exploration_rate(5) - 1.01 * 1000f64.ln()).abs() < 1e-12);
        let mut anytime = PolicyConfig::new(PolicyKind::PbmUcb);
        assert!((anytime.exploration_rate(50) - 1.01 * 50f64.ln()).abs() < 1e-12);
        anytime.horizon_t = Some(10);
        assert!(anytime.validate().is_err());
        anytime.horizon_t = None;
        anytime.epsilon = 0.0;
        assert!(anytime.validate().is_err());
        assert!(PolicyConfig::new(PolicyKind::Random).build(2, &[0.9, 0.5, 0.1]).is_err());
    }

    #[test]
    fn top_by_score_breaks_ties_low() {
        assert_eq!(top_by_score(&[0.2, 0.5, 0.5, 0.9], 3), vec![3, 1, 2]);
    }

    #[test]
    fn update_rejects_misaligned_feedback() {
        let mut policy = PolicyConfig::new(PolicyKind::PbmUcb).build(5, &[0.9, 0.6, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = policy.select_action(&mut rng);
        assert!(policy.update(&a, &Feedback::new(vec![true])).is_err());
    }
}
