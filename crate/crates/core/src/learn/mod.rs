//! PPO, SAC, BC and IQL updates, GAE, hindsight relabeling and rollout helpers.

mod bc;
mod gae;
mod her;
mod iql;
mod ppo;
mod replay;
mod rollout;
mod sac;
mod util;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, TaskId};
use crate::nn::NnError;

pub use bc::bc_update;
pub use gae::{compute_gae, normalize_advantages};
pub use her::{her_relabel, HERConfig, HerStrategy, Trajectory};
pub use iql::{expectile_loss, iql_q_targets, iql_update, IQLConfig, IqlLearner, IqlMetrics};
pub use ppo::{ppo_update, ActorCritic, PPOConfig, PpoBatch, PpoMetrics};
pub use replay::ReplayBuffer;
pub use rollout::{collect_episode, run_episode, EpisodeSummary, PpoCollector};
pub use sac::{sac_td_targets, sac_update, SACConfig, SacLearner, SacMetrics};
pub use util::clip_grad_norm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("divergence in minibatch {minibatch}")]
    Divergence { minibatch: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("task {0} is not goal-conditioned")]
    NotGoalConditioned(TaskId),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One environment step as seen by a learner.
///
/// `done` marks the last step of an episode; `truncated` says it ended on the
/// time limit, so values should still bootstrap through `next_obs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    #[serde(default)]
    pub truncated: bool,
    #[serde(default)]
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_goal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_goal: Option<Vec<f64>>,
}

impl Transition {
    /// 1.0 when the next state's value should be bootstrapped.
    pub fn continuation(&self) -> f64 {
        if self.done && !self.truncated {
            0.0
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests;
