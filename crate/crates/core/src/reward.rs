//! Set-level task reward and the KL-shaped reward.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error("non-finite input to shaped reward")]
    NonFinite,
}

/// Reward magnitudes. A missed relevant item must cost strictly more than a
/// spurious one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub r_correct: f64,
    pub r_irrelevant: f64,
    pub c_miss: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            r_correct: 1.0,
            r_irrelevant: -0.2,
            c_miss: -5.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.r_correct > 0.0) {
            return Err(RewardError::InvalidConfig("r_correct must be > 0".into()));
        }
        if !(self.r_irrelevant <= 0.0) {
            return Err(RewardError::InvalidConfig("r_irrelevant must be <= 0".into()));
        }
        if !(self.c_miss < self.r_irrelevant) {
            return Err(RewardError::InvalidConfig(
                "c_miss must be more negative than r_irrelevant".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub n_correct: usize,
    pub n_irrelevant: usize,
    pub n_missing: usize,
    pub task_reward: f64,
    pub kl_term: f64,
    pub shaped: f64,
}

pub fn task_reward(
    predicted: &BTreeSet<usize>,
    gold: &BTreeSet<usize>,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let n_correct = predicted.intersection(gold).count();
    let n_irrelevant = predicted.len() - n_correct;
    let n_missing = gold.len() - n_correct;
    let task = n_correct as f64 * cfg.r_correct
        + n_irrelevant as f64 * cfg.r_irrelevant
        + n_missing as f64 * cfg.c_miss;
    RewardBreakdown {
        n_correct,
        n_irrelevant,
        n_missing,
        task_reward: task,
        kl_term: 0.0,
        shaped: task,
    }
}

/// `task - beta * (logp_pi - logp_ref)`.
pub fn shaped_reward(task: f64, logp_pi: f64, logp_ref: f64, beta: f64) -> Result<f64, RewardError> {
    if !(task.is_finite() && logp_pi.is_finite() && logp_ref.is_finite() && beta.is_finite()) {
        return Err(RewardError::NonFinite);
    }
    Ok(task - beta * (logp_pi - logp_ref))
}

impl RewardBreakdown {
    /// Attach the sequence-level KL penalty.
    pub fn with_kl(mut self, logp_pi: f64, logp_ref: f64, beta: f64) -> Result<Self, RewardError> {
        self.shaped = shaped_reward(self.task_reward, logp_pi, logp_ref, beta)?;
        self.kl_term = self.task_reward - self.shaped;
        Ok(self)
    }
}
