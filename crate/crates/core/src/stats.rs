//! Per-(arm, position) sufficient statistics and the pooled linear estimator.

use std::io::{Read, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::model::{Action, Feedback, ModelError};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("arm {arm} has no bias-corrected plays yet")]
    NoData { arm: usize },
    #[error("theta = {theta} is outside (0, 1) or makes kappa * theta reach 1")]
    BoundaryTheta { theta: f64 },
    #[error("feedback has {feedback} entries but the action has {action}")]
    Misaligned { action: usize, feedback: usize },
    #[error(transparent)]
    Action(#[from] ModelError),
    #[error("counters csv line {line}: {message}")]
    Csv { line: u64, message: String },
}

/// Play counts `N[k][l]` and click counts `S[k][l]`, with the examination
/// probabilities needed for the bias-corrected sums.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterSet {
    kappa: Vec<f64>,
    num_arms: usize,
    plays: Vec<u64>,
    clicks: Vec<u64>,
}

/// Neumaier compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

impl CounterSet {
    pub fn new(num_arms: usize, kappa: Vec<f64>) -> Self {
        let cells = num_arms * kappa.len();
        CounterSet {
            kappa,
            num_arms,
            plays: vec![0; cells],
            clicks: vec![0; cells],
        }
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn num_positions(&self) -> usize {
        self.kappa.len()
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    fn cell(&self, arm: usize, position: usize) -> usize {
        arm * self.kappa.len() + position
    }

    pub fn plays(&self, arm: usize, position: usize) -> u64 {
        self.plays[self.cell(arm, position)]
    }

    pub fn clicks(&self, arm: usize, position: usize) -> u64 {
        self.clicks[self.cell(arm, position)]
    }

    /// Row of `N[arm][..]`.
    pub fn arm_plays_by_position(&self, arm: usize) -> &[u64] {
        let l = self.kappa.len();
        &self.plays[arm * l..(arm + 1) * l]
    }

    /// Row of `S[arm][..]`.
    pub fn arm_clicks_by_position(&self, arm: usize) -> &[u64] {
        let l = self.kappa.len();
        &self.clicks[arm * l..(arm + 1) * l]
    }

    /// `N_k`.
    pub fn arm_plays(&self, arm: usize) -> u64 {
        self.arm_plays_by_position(arm).iter().sum()
    }

    /// `S_k`.
    pub fn arm_clicks(&self, arm: usize) -> u64 {
        self.arm_clicks_by_position(arm).iter().sum()
    }

    /// `N~_k = sum_l kappa_l N_{k,l}`, recomputed from the integer counts.
    pub fn weighted_plays(&self, arm: usize) -> f64 {
        compensated_sum(
            self.arm_plays_by_position(arm)
                .iter()
                .zip(&self.kappa)
                .map(|(&n, &kappa)| kappa * n as f64),
        )
    }

    pub fn total_plays(&self) -> u64 {
        self.plays.iter().sum()
    }

    /// Records one round of feedback.
    pub fn update(&mut self, action: &Action, feedback: &Feedback) -> Result<(), StatsError> {
        if action.len() != feedback.len() {
            return Err(StatsError::Misaligned {
                action: action.len(),
                feedback: feedback.len(),
            });
        }
        action.validate(self.num_arms, self.num_positions())?;
        for (position, (&arm, &z)) in action.arms().iter().zip(feedback.clicks()).enumerate() {
            let cell = self.cell(arm, position);
            self.plays[cell] += 1;
            self.clicks[cell] += z as u64;
        }
        Ok(())
    }

    /// Adds `plays` impressions with `clicks` clicks to one cell.
    pub fn record(&mut self, arm: usize, position: usize, plays: u64, clicks: u64) {
        assert!(clicks <= plays, "clicks exceed plays");
        let cell = self.cell(arm, position);
        self.plays[cell] += plays;
        self.clicks[cell] += clicks;
    }

    /// Pooled linear estimator `S_k / N~_k`. Not clipped to `[0, 1]`.
    pub fn theta_hat(&self, arm: usize) -> Result<f64, StatsError> {
        let weighted = self.weighted_plays(arm);
        if weighted <= 0.0 {
            return Err(StatsError::NoData { arm });
        }
        Ok(self.arm_clicks(arm) as f64 / weighted)
    }

    /// Conditional Fisher information for `theta_k`.
    pub fn fisher_information(&self, arm: usize, theta: f64) -> Result<f64, StatsError> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(StatsError::BoundaryTheta { theta });
        }
        let mut terms = Vec::with_capacity(self.kappa.len());
        for (&n, &kappa) in self.arm_plays_by_position(arm).iter().zip(&self.kappa) {
            if n == 0 {
                continue;
            }
            let miss = 1.0 - kappa * theta;
            if miss <= 0.0 {
                return Err(StatsError::BoundaryTheta { theta });
            }
            terms.push(n as f64 * kappa / (theta * miss));
        }
        Ok(compensated_sum(terms))
    }

    /// Conditional variance of [`theta_hat`](Self::theta_hat) at `theta`.
    pub fn estimator_variance(&self, arm: usize, theta: f64) -> Result<f64, StatsError> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(StatsError::BoundaryTheta { theta });
        }
        let weighted = self.weighted_plays(arm);
        if weighted <= 0.0 {
            return Err(StatsError::NoData { arm });
        }
        let numerator = compensated_sum(
            self.arm_plays_by_position(arm)
                .iter()
                .zip(&self.kappa)
                .map(|(&n, &kappa)| n as f64 * kappa * theta * (1.0 - kappa * theta)),
        );
        Ok(numerator / (weighted * weighted))
    }

    /// Writes `arm,position,plays,clicks` rows (1-based), one per cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["arm", "position", "plays", "clicks"])?;
        for arm in 0..self.num_arms {
            for position in 0..self.num_positions() {
                out.write_record(&[
                    (arm + 1).to_string(),
                    (position + 1).to_string(),
                    self.plays(arm, position).to_string(),
                    self.clicks(arm, position).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a counters dump. `K` is the largest arm index in the file.
    pub fn read_csv<R: Read>(reader: R, kappa: Vec<f64>) -> Result<Self, StatsError> {
        #[derive(Deserialize)]
        struct Row {
            arm: usize,
            position: usize,
            plays: u64,
            clicks: u64,
        }
        let mut rows = Vec::new();
        let mut input = csv::Reader::from_reader(reader);
        for (i, record) in input.deserialize::<Row>().enumerate() {
            let line = i as u64 + 2;
            let row = record.map_err(|e| StatsError::Csv {
                line,
                message: e.to_string(),
            })?;
            if row.arm == 0 || row.position == 0 || row.position > kappa.len() {
                return Err(StatsError::Csv {
                    line,
                    message: format!("arm {} / position {} out of range", row.arm, row.position),
                });
            }
            if row.clicks > row.plays {
                return Err(StatsError::Csv {
                    line,
                    message: "clicks exceed plays".into(),
                });
            }
            rows.push(row);
        }
        let num_arms = rows.iter().map(|r| r.arm).max().unwrap_or(0);
        let mut counters = CounterSet::new(num_arms, kappa);
        for row in rows {
            counters.record(row.arm - 1, row.position - 1, row.plays, row.clicks);
        }
        Ok(counters)
    }
}
