//! Asymptotic regret bounds: the closed-form lower bound with its per-arm
//! optimal exploration position, a cruder relaxation, and the log-T
//! coefficients of the PBM-UCB and PBM-PIE upper bounds.
//!
//! All functions sort arms by decreasing `theta` and positions by decreasing
//! `kappa` internally, so inputs may come in any order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{kl_bernoulli, Action, PbmModel};

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("arm {arm} is among the top {num_positions} arms; only suboptimal arms can be inserted")]
    NotSuboptimal { arm: usize, num_positions: usize },
    #[error("position {position} is out of range for L={num_positions}")]
    PositionOutOfRange { position: usize, num_positions: usize },
    #[error("eta = {eta} must lie in (0, {max}); the bound needs eta < min_k (theta_k - theta_(k+1)) / 2")]
    Eta { eta: f64, max: f64 },
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
}

/// Contribution of one suboptimal arm to the lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTerm {
    /// 0-based arm index in the input model.
    pub arm: usize,
    /// 0-based rank of the exploration position (0 = largest kappa).
    pub best_rank: usize,
    /// Display position (0-based) holding that rank.
    pub best_position: usize,
    pub gap: f64,
    pub kl: f64,
    /// `gap / kl`; infinite (serialized as `null`) when `theta_k` ties `theta_L`.
    #[serde(with = "infinite_as_null")]
    pub ratio: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_f64(*value)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Coefficient of `log T` in the lower bound, summed over finite terms.
    pub f_theta: f64,
    pub per_arm: Vec<ArmTerm>,
    /// Arms whose term is infinite and was left out of `f_theta`.
    pub infinite_terms: Vec<usize>,
    pub crude: f64,
    pub ucb_constant: f64,
}

impl BoundReport {
    pub fn has_infinite_terms(&self) -> bool {
        !self.infinite_terms.is_empty()
    }
}

/// Sorted view of a model.
struct Canonical<'a> {
    model: &'a PbmModel,
    arms: Vec<usize>,
    positions: Vec<usize>,
}

impl<'a> Canonical<'a> {
    fn new(model: &'a PbmModel) -> Self {
        Canonical {
            model,
            arms: model.arms_by_theta(),
            positions: model.positions_by_kappa(),
        }
    }

    fn num_positions(&self) -> usize {
        self.positions.len()
    }

    fn theta(&self, rank: usize) -> f64 {
        self.model.theta()[self.arms[rank]]
    }

    fn kappa(&self, rank: usize) -> f64 {
        self.model.kappa()[self.positions[rank]]
    }

    fn theta_last_optimal(&self) -> f64 {
        self.theta(self.num_positions() - 1)
    }

    fn suboptimal(&self) -> impl Iterator<Item = usize> + '_ {
        self.arms[self.num_positions()..].iter().copied()
    }

    /// `mu* - mu(v)` for an arm of attraction `theta` at kappa-rank `rank`,
    /// summed as `sum_{j >= rank} (kappa_j - kappa_{j+1}) (theta_(j) - theta)`
    /// with `kappa_L = 0`: every term is nonnegative, so nothing cancels.
    fn insertion_gap(&self, theta: f64, rank: usize) -> f64 {
        let l = self.num_positions();
        (rank..l)
            .map(|j| {
                let next = if j + 1 < l { self.kappa(j + 1) } else { 0.0 };
                (self.kappa(j) - next) * (self.theta(j) - theta).max(0.0)
            })
            .sum()
    }

    /// Arm `arm` at kappa-rank `rank`, the top `L - 1` arms around it.
    fn insertion(&self, arm: usize, rank: usize) -> Action {
        let l = self.num_positions();
        let mut ranked: Vec<usize> = self.arms[..l - 1].to_vec();
        ranked.insert(rank, arm);
        let mut display = vec![0; l];
        for (r, &position) in self.positions.iter().enumerate() {
            display[position] = ranked[r];
        }
        Action::new(display)
    }
}

/// The list `v_{k,l}`: suboptimal arm `arm` explored at kappa-rank `rank`
/// (0-based), in display order.
pub fn insertion_action(model: &PbmModel, arm: usize, rank: usize) -> Result<Action, BoundError> {
    let canon = Canonical::new(model);
    let l = canon.num_positions();
    if rank >= l {
        return Err(BoundError::PositionOutOfRange {
            position: rank,
            num_positions: l,
        });
    }
    if canon.arms[..l].contains(&arm) || arm >= model.num_arms() {
        return Err(BoundError::NotSuboptimal { arm, num_positions: l });
    }
    Ok(canon.insertion(arm, rank))
}

/// Closed-form lower bound
/// `sum_{k > L} min_l Delta(v_{k,l}) / d(kappa_l theta_k, kappa_l theta_L)`,
/// each minimum by enumeration over `l`.
pub fn theorem4_bound(model: &PbmModel) -> BoundReport {
    let canon = Canonical::new(model);
    let theta_last = canon.theta_last_optimal();
    let mut per_arm = Vec::new();
    let mut infinite_terms = Vec::new();
    let mut f_theta = 0.0;
    for arm in canon.suboptimal() {
        let theta = model.theta()[arm];
        let mut best: Option<ArmTerm> = None;
        for rank in 0..canon.num_positions() {
            let kappa = canon.kappa(rank);
            let gap = canon.insertion_gap(theta, rank);
            let kl = kl_bernoulli(kappa * theta, kappa * theta_last);
            let ratio = if kl > 0.0 { gap / kl } else { f64::INFINITY };
            if best.as_ref().is_none_or(|b| ratio < b.ratio) {
                best = Some(ArmTerm {
                    arm,
                    best_rank: rank,
                    best_position: canon.positions[rank],
                    gap,
                    kl,
                    ratio,
                });
            }
        }
        let term = best.expect("L >= 1");
        if term.ratio.is_finite() {
            f_theta += term.ratio;
        } else {
            infinite_terms.push(arm);
        }
        per_arm.push(term);
    }
    BoundReport {
        f_theta,
        per_arm,
        infinite_terms,
        crude: crude_bound(model),
        ucb_constant: ucb_constant(model),
    }
}

/// `kappa_L sum_{k > L} (theta_L - theta_k) / d(kappa_L theta_k, kappa_L theta_L)`.
///
/// Arms tied with `theta_L` contribute nothing.
pub fn crude_bound(model: &PbmModel) -> f64 {
    let canon = Canonical::new(model);
    let kappa_last = canon.kappa(canon.num_positions() - 1);
    let theta_last = canon.theta_last_optimal();
    canon
        .suboptimal()
        .map(|arm| {
            let theta = model.theta()[arm];
            let kl = kl_bernoulli(kappa_last * theta, kappa_last * theta_last);
            if kl > 0.0 {
                kappa_last * (theta_last - theta) / kl
            } else {
                0.0
            }
        })
        .sum()
}

/// `C(kappa) = min_l [ (sum_j kappa_j)^2 / l + (sum_{j<=l} kappa_j)^2 ] / kappa_L^2`.
pub fn ucb_constant(model: &PbmModel) -> f64 {
    let canon = Canonical::new(model);
    let l = canon.num_positions();
    let kappa: Vec<f64> = (0..l).map(|r| canon.kappa(r)).collect();
    let total: f64 = kappa.iter().sum();
    let last = kappa[l - 1];
    let mut prefix = 0.0;
    let mut best = f64::INFINITY;
    for (i, &k) in kappa.iter().enumerate() {
        prefix += k;
        let candidate = (total * total / (i + 1) as f64 + prefix * prefix) / (last * last);
        best = best.min(candidate);
    }
    best
}

/// Largest admissible `eta` (exclusive) for [`pie_leading_term`].
pub fn max_eta(model: &PbmModel) -> f64 {
    let canon = Canonical::new(model);
    (1..model.num_arms())
        .map(|r| canon.theta(r - 1) - canon.theta(r))
        .fold(f64::INFINITY, f64::min)
        / 2.0
}

/// Coefficient of `log T` in the PBM-PIE upper bound:
/// `(1 + eps)^2 sum_{k > L} kappa_L (theta_L - theta_k) / d(kappa_L theta_k, kappa_L (theta_L - eta))`.
pub fn pie_leading_term(model: &PbmModel, epsilon: f64, eta: f64) -> Result<f64, BoundError> {
    if !(epsilon > 0.0) {
        return Err(BoundError::Epsilon(epsilon));
    }
    let max = max_eta(model);
    if !(eta > 0.0 && eta < max) {
        return Err(BoundError::Eta { eta, max });
    }
    let canon = Canonical::new(model);
    let kappa_last = canon.kappa(canon.num_positions() - 1);
    let theta_last = canon.theta_last_optimal();
    let sum: f64 = canon
        .suboptimal()
        .map(|arm| {
            let theta = model.theta()[arm];
            kappa_last * (theta_last - theta) / kl_bernoulli(kappa_last * theta, kappa_last * (theta_last - eta))
        })
        .sum();
    Ok((1.0 + epsilon).powi(2) * sum)
}

/// `(t, f * ln t)` on the given time points.
pub fn reference_curve(f_theta: f64, times: &[u64]) -> Vec<(u64, f64)> {
    times.iter().map(|&t| (t, f_theta * (t as f64).ln())).collect()
}
