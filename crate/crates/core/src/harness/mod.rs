//! Seeded multi-replication experiments on PBM instances.
//!
//! Every `(policy, replication)` pair is an independent work item with its
//! own random stream (see [`seed`]), so results do not depend on the number
//! of worker threads or on scheduling. Regret is pseudo-regret: the sum of
//! expected gaps `mu* - mu_{A(t)}` of the displayed lists.

mod config;
mod export;
pub mod seed;

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{sanitize_label, ExperimentConfig, LabeledPolicy, DEFAULT_CHECKPOINTS};
pub use export::{export, Summary};

use crate::bound::{theorem4_bound, BoundReport};
use crate::model::PbmModel;
use crate::posterior::SamplerStats;
use crate::stats::compensated_sum;

/// A run fails when more than this fraction of a policy's replications abort.
pub const MAX_ABORT_FRACTION: f64 = 0.01;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "PBM_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("policy `{label}`: {aborted} of {total} replications aborted; first: {first}")]
    TooManyAborts { label: String, aborted: usize, total: u64, first: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Log-spaced grid on `[1, horizon]`, merged with the powers of ten below
/// `horizon` and `horizon` itself.
pub fn checkpoint_grid(horizon: u64, count: usize) -> Vec<u64> {
    let mut points = Vec::with_capacity(count + 8);
    let log_t = (horizon as f64).ln();
    for i in 0..count {
        let frac = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
        points.push(((frac * log_t).exp().round() as u64).clamp(1, horizon));
    }
    let mut power = 1;
    while power <= horizon {
        points.push(power);
        power = match power.checked_mul(10) {
            Some(p) => p,
            None => break,
        };
    }
    points.push(horizon);
    points.sort_unstable();
    points.dedup();
    points
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub replication: u64,
    pub message: String,
}

/// Cumulative pseudo-regret of one policy across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub label: String,
    pub checkpoints: Vec<u64>,
    /// `raw[r][i]`: regret of the `r`-th completed replication at `checkpoints[i]`.
    pub raw: Vec<Vec<f64>>,
    /// Replication index of each row of `raw`.
    pub replications: Vec<u64>,
    pub seeds: Vec<u64>,
    pub mean: Vec<f64>,
    pub decile_10: Vec<f64>,
    pub decile_90: Vec<f64>,
    pub aborted: Vec<Abort>,
    pub sampler: Option<SamplerStats>,
}

impl RegretCurve {
    fn assemble(label: &str, checkpoints: Vec<u64>, runs: Vec<(u64, u64, Result<Run, String>)>) -> Self {
        let mut curve = RegretCurve {
            label: label.to_owned(),
            checkpoints,
            raw: Vec::new(),
            replications: Vec::new(),
            seeds: Vec::new(),
            mean: Vec::new(),
            decile_10: Vec::new(),
            decile_90: Vec::new(),
            aborted: Vec::new(),
            sampler: None,
        };
        for (replication, seed, outcome) in runs {
            curve.seeds.push(seed);
            match outcome {
                Ok(run) => {
                    curve.raw.push(run.regret);
                    curve.replications.push(replication);
                    if let Some(stats) = run.sampler {
                        curve.sampler.get_or_insert_with(SamplerStats::default).merge(&stats);
                    }
                }
                Err(message) => curve.aborted.push(Abort { replication, message }),
            }
        }
        curve.aggregate();
        curve
    }

    fn aggregate(&mut self) {
        let n = self.raw.len();
        if n == 0 {
            return;
        }
        let mut column = vec![0.0; n];
        for i in 0..self.checkpoints.len() {
            for (c, row) in column.iter_mut().zip(&self.raw) {
                *c = row[i];
            }
            column.sort_by(f64::total_cmp);
            // rounding must not push the mean outside the sample range
            let mean = compensated_sum(column.iter().copied()) / n as f64;
            self.mean.push(mean.clamp(column[0], column[n - 1]));
            self.decile_10.push(quantile_sorted(&column, 0.1));
            self.decile_90.push(quantile_sorted(&column, 0.9));
        }
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(f64::NAN)
    }

    /// Mean regret at checkpoint `t`, if `t` is on the grid.
    pub fn mean_at(&self, t: u64) -> Option<f64> {
        self.checkpoints.iter().position(|&c| c == t).map(|i| self.mean[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub checkpoints: Vec<u64>,
    pub curves: Vec<RegretCurve>,
    /// One report per model in the pool.
    pub bounds: Vec<BoundReport>,
}

impl ExperimentResult {
    pub fn curve(&self, label: &str) -> Option<&RegretCurve> {
        self.curves.iter().find(|c| c.label == label)
    }

    /// Lower-bound coefficient for the experiment: the mean of `f(theta)`
    /// over the pool, matching the uniform model draw.
    pub fn lower_bound_coefficient(&self) -> f64 {
        self.bounds.iter().map(|b| b.f_theta).sum::<f64>() / self.bounds.len() as f64
    }
}

struct Run {
    regret: Vec<f64>,
    sampler: Option<SamplerStats>,
}

/// A validated config with its models loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub models: Vec<PbmModel>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, base_dir: &Path) -> Result<Self, HarnessError> {
        config.validate()?;
        let models = config.load_models(base_dir)?;
        Ok(Experiment { config, models })
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let config = ExperimentConfig::from_path(path)?;
        Self::new(config, path.parent().unwrap_or(Path::new(".")))
    }

    /// Runs every replication on `threads` workers; `None` uses the rayon default.
    pub fn run(&self, threads: Option<usize>) -> Result<ExperimentResult, HarnessError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n.max(1));
        }
        let pool = builder.build().map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
        pool.install(|| self.run_in_current_pool())
    }

    fn run_in_current_pool(&self) -> Result<ExperimentResult, HarnessError> {
        let cfg = &self.config;
        let checkpoints = checkpoint_grid(cfg.horizon, cfg.checkpoints);
        let items: Vec<(usize, u64)> = (0..cfg.policies.len())
            .flat_map(|p| (0..cfg.replications).map(move |r| (p, r)))
            .collect();
        let outcomes: Vec<(u64, u64, Result<Run, String>)> = items
            .par_iter()
            .map(|&(p, r)| {
                let label = &cfg.policies[p].label;
                let seed = seed::replication_seed(cfg.base_seed, r, label);
                (r, seed, self.replicate(p, r, seed, &checkpoints))
            })
            .collect();

        let mut outcomes = outcomes.into_iter();
        let mut curves = Vec::with_capacity(cfg.policies.len());
        for policy in &cfg.policies {
            let runs: Vec<_> = outcomes.by_ref().take(cfg.replications as usize).collect();
            let curve = RegretCurve::assemble(&policy.label, checkpoints.clone(), runs);
            if curve.aborted.len() as f64 > MAX_ABORT_FRACTION * cfg.replications as f64 {
                return Err(HarnessError::TooManyAborts {
                    label: policy.label.clone(),
                    aborted: curve.aborted.len(),
                    total: cfg.replications,
                    first: curve.aborted[0].message.clone(),
                });
            }
            curves.push(curve);
        }
        Ok(ExperimentResult {
            config: cfg.clone(),
            checkpoints,
            curves,
            bounds: self.models.iter().map(theorem4_bound).collect(),
        })
    }

    /// Model for replication `r`; pool draws use a label-independent stream so
    /// every policy faces the same model in a given replication.
    fn model_for(&self, replication: u64) -> &PbmModel {
        if self.models.len() == 1 {
            return &self.models[0];
        }
        let mut rng = seed::replication_rng(self.config.base_seed, replication, seed::POOL_STREAM_LABEL);
        &self.models[rng.random_range(0..self.models.len())]
    }

    fn replicate(&self, policy: usize, replication: u64, seed: u64, checkpoints: &[u64]) -> Result<Run, String> {
        use rand::SeedableRng;
        let model = self.model_for(replication);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut learner = self.config.policies[policy]
            .policy_config()
            .build(model.num_arms(), model.kappa())
            .map_err(|e| e.to_string())?;
        let mut regret = Vec::with_capacity(checkpoints.len());
        let mut next = checkpoints.iter().peekable();
        let mut cumulative = 0.0;
        for t in 1..=self.config.horizon {
            let action = learner.select_action(&mut rng);
            cumulative += model.gap(&action).map_err(|e| format!("round {t}: {e}"))?;
            let feedback = model.sample_feedback(&action, &mut rng);
            learner.update(&action, &feedback).map_err(|e| format!("round {t}: {e}"))?;
            if next.peek() == Some(&&t) {
                regret.push(cumulative);
                next.next();
            }
        }
        Ok(Run {
            regret,
            sampler: learner.sampler_stats(),
        })
    }
}

/// Worker count from `flag`, else from [`THREADS_ENV`], else `None`.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, HarnessError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(value) => value
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| HarnessError::Config(format!("{THREADS_ENV}=`{value}` is not a thread count"))),
        Err(_) => Ok(None),
    }
}
