//! Multiple-play bandits under the position-based click model (PBM).
//!
//! A list of `L` distinct items is shown per round; position `l` is examined
//! with probability `kappa_l` and item `k` attracts with probability
//! `theta_k`, and a click needs both. The crate provides the environment,
//! bias-corrected estimators and confidence indices, the PBM-UCB, PBM-PIE and
//! PBM-TS learners with baselines, the asymptotic regret lower bound, EM
//! fitting of click logs, and a seeded experiment harness.
//!
//! Arm and position indices are 0-based throughout the API and 1-based in
//! every file format.

pub mod bound;
pub mod emfit;
pub mod harness;
pub mod indices;
pub mod model;
pub mod policies;
pub mod posterior;
mod roots;
pub mod stats;

pub use model::{kl_bernoulli, Action, Feedback, ModelError, PbmModel};
pub use policies::{Policy, PolicyConfig, PolicyKind};
pub use stats::CounterSet;
