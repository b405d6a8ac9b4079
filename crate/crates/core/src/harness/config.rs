//! Experiment configuration, read from TOML.
//!
//! ```toml
//! horizon = 100000
//! replications = 200
//! base_seed = 1
//! checkpoints = 50
//! output_dir = "results"
//!
//! [model]
//! K = 5
//! L = 3
//! theta = [0.45, 0.35, 0.25, 0.15, 0.05]
//! kappa = [0.9, 0.6, 0.3]
//!
//! [[policies]]
//! label = "PBM-PIE"
//! kind = "pbm_pie"
//! ```
//!
//! `model_pool = "fit.json"` replaces `[model]` with the per-query models of
//! a fit result; relative paths resolve against the config file's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::emfit::FitResult;
use crate::model::PbmModel;
use crate::policies::{HorizonMode, PolicyConfig, PolicyKind, DEFAULT_EPSILON};

pub const DEFAULT_CHECKPOINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: u64,
    pub replications: u64,
    pub base_seed: u64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PbmModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_pool: Option<PathBuf>,
    pub policies: Vec<LabeledPolicy>,
}

fn default_checkpoints() -> usize {
    DEFAULT_CHECKPOINTS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// A [`PolicyConfig`] with the label used for seeds and file names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPolicy {
    pub label: String,
    pub kind: PolicyKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub horizon_mode: HorizonMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_t: Option<u64>,
}

impl LabeledPolicy {
    pub fn new(label: &str, config: PolicyConfig) -> Self {
        LabeledPolicy {
            label: label.to_owned(),
            kind: config.kind,
            epsilon: config.epsilon,
            horizon_mode: config.horizon_mode,
            horizon_t: config.horizon_t,
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            kind: self.kind,
            epsilon: self.epsilon,
            horizon_mode: self.horizon_mode,
            horizon_t: self.horizon_t,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_owned(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// Checks everything that does not depend on the model source.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.horizon == 0 {
            return fail("horizon must be positive".into());
        }
        if self.replications == 0 {
            return fail("replications must be positive".into());
        }
        if self.checkpoints == 0 {
            return fail("checkpoints must be positive".into());
        }
        if self.policies.is_empty() {
            return fail("at least one policy is required".into());
        }
        let mut labels = HashSet::new();
        for p in &self.policies {
            if p.label.is_empty() {
                return fail("policy labels must be non-empty".into());
            }
            if !labels.insert(sanitize_label(&p.label)) {
                return fail(format!("duplicate policy label `{}`", p.label));
            }
            p.policy_config()
                .validate()
                .map_err(|e| HarnessError::Config(format!("policy `{}`: {e}", p.label)))?;
        }
        match (&self.model, &self.model_pool) {
            (Some(_), Some(_)) => fail("give either `model` or `model_pool`, not both".into()),
            (None, None) => fail("one of `model` or `model_pool` is required".into()),
            _ => Ok(()),
        }
    }

    /// The models to simulate: one inline model, or the pool.
    pub fn load_models(&self, base_dir: &Path) -> Result<Vec<PbmModel>, HarnessError> {
        let models = match (&self.model, &self.model_pool) {
            (Some(model), None) => vec![model.clone()],
            (None, Some(pool)) => {
                let path = if pool.is_absolute() { pool.clone() } else { base_dir.join(pool) };
                let fit = FitResult::from_path(&path)
                    .map_err(|e| HarnessError::Config(format!("model pool {}: {e}", path.display())))?;
                let models = fit
                    .models()
                    .map_err(|e| HarnessError::Config(format!("model pool {}: {e}", path.display())))?;
                if models.is_empty() {
                    return Err(HarnessError::Config(format!("model pool {} is empty", path.display())));
                }
                models
            }
            _ => return Err(HarnessError::Config("exactly one model source is required".into())),
        };
        if let Some(m) = models.iter().find(|m| (m.num_arms() as u64) > self.horizon) {
            return Err(HarnessError::Config(format!(
                "horizon {} is shorter than the K={} initialization rounds",
                self.horizon,
                m.num_arms()
            )));
        }
        Ok(models)
    }
}

/// File-name form of a label: ASCII alphanumerics, `-` and `_` kept, the
/// rest replaced by `_`.
pub fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
