//! Problem instances of the position-based click model.
//!
//! A click at position `l` on arm `k` happens when the position is examined
//! (probability `kappa[l]`) and the arm is attractive (probability
//! `theta[k]`). Only the product of both events is ever observed.
//!
//! Arm and position indices are 0-based in the API. File formats that expose
//! indices (counter dumps, click logs) are 1-based.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("model needs at least one arm and one position (got K={num_arms}, L={num_positions})")]
    Empty {
        num_arms: usize,
        num_positions: usize,
    },
    #[error("L={num_positions} positions exceed K={num_arms} arms")]
    TooManyPositions {
        num_arms: usize,
        num_positions: usize,
    },
    #[error("theta[{index}] = {value} is outside (0, 1)")]
    Theta { index: usize, value: f64 },
    #[error("kappa[{index}] = {value} is outside (0, 1]")]
    Kappa { index: usize, value: f64 },
    #[error("declared {field} = {declared} but the vector has {actual} entries")]
    LengthMismatch {
        field: &'static str,
        declared: usize,
        actual: usize,
    },
    #[error("action has {actual} arms, expected {expected}")]
    ActionLength { expected: usize, actual: usize },
    #[error("arm {arm} is out of range for K={num_arms}")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    #[error("arm {arm} appears more than once in the action")]
    DuplicateArm { arm: usize },
    #[error("cannot read model file: {0}")]
    Io(String),
    #[error("cannot parse model file: {0}")]
    Parse(String),
}

/// Bernoulli Kullback-Leibler divergence `d(p, q)`.
///
/// Total on `[0, 1]^2`: `0 log 0 = 0`, and the result is `+inf` whenever `q`
/// sits on the boundary and differs from `p`.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    if p == q {
        return 0.0;
    }
    if q <= 0.0 || q >= 1.0 {
        return f64::INFINITY;
    }
    let x = (p - q) / q;
    let y = (q - p) / (1.0 - q);
    let mut d = 0.0;
    if x.abs() < 0.5 && y.abs() < 0.5 {
        // p x + (1-p) y = (p-q)^2 / (q(1-q)) exactly; splitting it off keeps
        // the second-order result free of first-order cancellation.
        d += (p - q) * (p - q) / (q * (1.0 - q));
        d += p * ln_1p_minus_x(x) + (1.0 - p) * ln_1p_minus_x(y);
    } else {
        if p > 0.0 {
            d += p * (p / q).ln();
        }
        if p < 1.0 {
            d += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
        }
    }
    // rounding can push the sum a hair below zero when p ~ q
    d.max(0.0)
}

/// `ln(1 + x) - x`, by its series when the subtraction would cancel.
fn ln_1p_minus_x(x: f64) -> f64 {
    if x.abs() >= 0.01 {
        return x.ln_1p() - x;
    }
    // terms shrink by |x| <= 0.01; twelve reach far below one ulp of x^2/2
    let mut power = x * x;
    let mut sum = 0.0;
    for n in 2..14 {
        let term = power / n as f64;
        sum += if n % 2 == 0 { -term } else { term };
        power *= x;
    }
    sum
}

/// An ordered list of distinct arms, position 0 first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action(Vec<usize>);

impl Action {
    /// Wraps a list of arms without checking it against a model.
    pub fn new(arms: Vec<usize>) -> Self {
        Action(arms)
    }

    pub fn arms(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.0.contains(&arm)
    }

    /// Checks length, range and distinctness against `K` arms and `L` positions.
    pub fn validate(&self, num_arms: usize, num_positions: usize) -> Result<(), ModelError> {
        if self.0.len() != num_positions {
            return Err(ModelError::ActionLength {
                expected: num_positions,
                actual: self.0.len(),
            });
        }
        let mut seen = vec![false; num_arms];
        for &arm in &self.0 {
            if arm >= num_arms {
                return Err(ModelError::ArmOutOfRange { arm, num_arms });
            }
            if seen[arm] {
                return Err(ModelError::DuplicateArm { arm });
            }
            seen[arm] = true;
        }
        Ok(())
    }
}

/// Censored observation vector: `z[l]` is 1 iff the item at position `l` was clicked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feedback(Vec<bool>);

impl Feedback {
    pub fn new(clicks: Vec<bool>) -> Self {
        Feedback(clicks)
    }

    pub fn clicks(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().filter(|&&z| z).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct PbmModel {
    theta: Vec<f64>,
    kappa: Vec<f64>,
}

/// On-disk layout of a model: `K`, `L`, `theta`, `kappa`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "K")]
    pub num_arms: usize,
    #[serde(rename = "L")]
    pub num_positions: usize,
    pub theta: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl TryFrom<ModelFile> for PbmModel {
    type Error = ModelError;

    fn try_from(file: ModelFile) -> Result<Self, ModelError> {
        if file.theta.len() != file.num_arms {
            return Err(ModelError::LengthMismatch {
                field: "K",
                declared: file.num_arms,
                actual: file.theta.len(),
            });
        }
        if file.kappa.len() != file.num_positions {
            return Err(ModelError::LengthMismatch {
                field: "L",
                declared: file.num_positions,
                actual: file.kappa.len(),
            });
        }
        PbmModel::new(file.theta, file.kappa)
    }
}

impl From<PbmModel> for ModelFile {
    fn from(model: PbmModel) -> Self {
        ModelFile {
            num_arms: model.num_arms(),
            num_positions: model.num_positions(),
            theta: model.theta,
            kappa: model.kappa,
        }
    }
}

impl PbmModel {
    pub fn new(theta: Vec<f64>, kappa: Vec<f64>) -> Result<Self, ModelError> {
        if theta.is_empty() || kappa.is_empty() {
            return Err(ModelError::Empty {
                num_arms: theta.len(),
                num_positions: kappa.len(),
            });
        }
        if kappa.len() > theta.len() {
            return Err(ModelError::TooManyPositions {
                num_arms: theta.len(),
                num_positions: kappa.len(),
            });
        }
        for (index, &value) in theta.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(ModelError::Theta { index, value });
            }
        }
        for (index, &value) in kappa.iter().enumerate() {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ModelError::Kappa { index, value });
            }
        }
        Ok(PbmModel { theta, kappa })
    }

    /// Reads a model from TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|ext| ext == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        file.try_into()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        file.try_into()
    }

    pub fn num_arms(&self) -> usize {
        self.theta.len()
    }

    pub fn num_positions(&self) -> usize {
        self.kappa.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Arms ordered by decreasing attraction, ties by smaller index.
    pub fn arms_by_theta(&self) -> Vec<usize> {
        sorted_desc(&self.theta)
    }

    /// Positions ordered by decreasing examination probability, ties by smaller index.
    pub fn positions_by_kappa(&self) -> Vec<usize> {
        sorted_desc(&self.kappa)
    }

    /// `mu_a = sum_l kappa_l theta_{a_l}`.
    pub fn expected_reward(&self, action: &Action) -> Result<f64, ModelError> {
        action.validate(self.num_arms(), self.num_positions())?;
        Ok(self.reward_unchecked(action.arms()))
    }

    pub(crate) fn reward_unchecked(&self, arms: &[usize]) -> f64 {
        arms.iter()
            .zip(&self.kappa)
            .map(|(&arm, &kappa)| kappa * self.theta[arm])
            .sum()
    }

    /// Best arms matched to best positions (rearrangement inequality).
    pub fn optimal_action(&self) -> Action {
        let arms = self.arms_by_theta();
        let mut display = vec![0; self.num_positions()];
        for (rank, &position) in self.positions_by_kappa().iter().enumerate() {
            display[position] = arms[rank];
        }
        Action(display)
    }

    pub fn optimal_reward(&self) -> f64 {
        self.reward_unchecked(self.optimal_action().arms())
    }

    /// `Delta_a = mu* - mu_a`, clamped at zero against rounding.
    pub fn gap(&self, action: &Action) -> Result<f64, ModelError> {
        let reward = self.expected_reward(action)?;
        Ok((self.optimal_reward() - reward).max(0.0))
    }

    /// One round of censored clicks for `action`.
    ///
    /// Examination and attraction are independent, so their product is a
    /// single Bernoulli draw with probability `kappa_l * theta_{a_l}`; the
    /// latent factors never leave this function.
    pub fn sample_feedback<R: Rng + ?Sized>(&self, action: &Action, rng: &mut R) -> Feedback {
        debug_assert_eq!(action.len(), self.num_positions());
        Feedback(
            action
                .arms()
                .iter()
                .zip(&self.kappa)
                .map(|(&arm, &kappa)| rng.random::<f64>() < kappa * self.theta[arm])
                .collect(),
        )
    }
}

pub(crate) fn sorted_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}
