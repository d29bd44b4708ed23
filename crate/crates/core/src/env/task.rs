use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnvError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    Reach,
    ReachVelocity,
    Touch,
    Strike,
    StrikeCrowd,
    Juggle,
    PuckVelocity,
    MoveBlock,
    HitGoal,
    HitGoalVelocity,
}

impl TaskId {
    pub const ALL: [TaskId; 10] = [
        TaskId::Reach,
        TaskId::ReachVelocity,
        TaskId::Touch,
        TaskId::Strike,
        TaskId::StrikeCrowd,
        TaskId::Juggle,
        TaskId::PuckVelocity,
        TaskId::MoveBlock,
        TaskId::HitGoal,
        TaskId::HitGoalVelocity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Reach => "Reach",
            TaskId::ReachVelocity => "ReachVelocity",
            TaskId::Touch => "Touch",
            TaskId::Strike => "Strike",
            TaskId::StrikeCrowd => "StrikeCrowd",
            TaskId::Juggle => "Juggle",
            TaskId::PuckVelocity => "PuckVelocity",
            TaskId::MoveBlock => "MoveBlock",
            TaskId::HitGoal => "HitGoal",
            TaskId::HitGoalVelocity => "HitGoalVelocity",
        }
    }

    /// Column header used in results tables.
    pub fn short_label(self) -> &'static str {
        match self {
            TaskId::Reach => "Reach",
            TaskId::ReachVelocity => "Reach V.",
            TaskId::Touch => "Touch",
            TaskId::Strike => "Strike",
            TaskId::StrikeCrowd => "Strike Crowd",
            TaskId::Juggle => "Juggle",
            TaskId::PuckVelocity => "Puck V.",
            TaskId::MoveBlock => "Block",
            TaskId::HitGoal => "Hit Goal",
            TaskId::HitGoalVelocity => "Hit Goal V.",
        }
    }

    pub fn goal_conditioned(self) -> bool {
        matches!(
            self,
            TaskId::Reach | TaskId::ReachVelocity | TaskId::HitGoal | TaskId::HitGoalVelocity
        )
    }

    /// Goal includes a velocity as well as a position.
    pub fn velocity_goal(self) -> bool {
        matches!(self, TaskId::ReachVelocity | TaskId::HitGoalVelocity)
    }

    /// Whether meeting the success condition ends the episode.
    pub fn terminates_on_success(self) -> bool {
        !matches!(self, TaskId::Touch | TaskId::Juggle | TaskId::StrikeCrowd)
    }

    pub fn default_blocks(self) -> usize {
        match self {
            TaskId::StrikeCrowd => 6,
            TaskId::MoveBlock => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        TaskId::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| EnvError::UnknownTask {
                given: s.to_string(),
                valid: TaskId::ALL.iter().map(|t| t.name()).collect::<Vec<_>>().join(", "),
            })
    }
}

pub mod weights {
    pub const DISTANCE: &str = "distance";
    pub const VELOCITY: &str = "velocity";
    pub const PUCK_DISTANCE: &str = "puck_distance";
    pub const SUCCESS: &str = "success";
    pub const TOUCH: &str = "touch";
    pub const JUGGLE: &str = "juggle";
    pub const SPREAD: &str = "spread";
    pub const GOAL_DISTANCE: &str = "goal_distance";
    pub const GOAL_COSINE: &str = "goal_cosine";
    pub const GOAL_SPEED: &str = "goal_speed";
}

/// Thresholds, limits, and reward weights for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub episode_limit: u64,
    pub eps_position: f64,
    pub eps_velocity: f64,
    pub v_min_strike: f64,
    pub v_min_up: f64,
    pub juggle_rise: f64,
    pub juggle_hits_success: u32,
    pub block_move_min: f64,
    pub crowd_spread_min: f64,
    pub goal_radius: f64,
    pub goal_speed: f64,
    pub reward_weights: BTreeMap<String, f64>,
    pub reg_lambda: f64,
    pub goal_conditioned: bool,
    pub n_blocks: usize,
}

impl TaskSpec {
    pub fn default_for(task_id: TaskId) -> Self {
        let mut w = BTreeMap::new();
        w.insert(weights::DISTANCE.to_string(), 0.1);
        w.insert(weights::VELOCITY.to_string(), 0.1);
        w.insert(weights::PUCK_DISTANCE.to_string(), 0.1);
        w.insert(weights::SUCCESS.to_string(), 1.0);
        w.insert(weights::TOUCH.to_string(), 1.0);
        w.insert(weights::JUGGLE.to_string(), 1.0);
        w.insert(weights::SPREAD.to_string(), 1.0);
        w.insert(weights::GOAL_DISTANCE.to_string(), 1.0);
        w.insert(weights::GOAL_COSINE.to_string(), 0.5);
        w.insert(weights::GOAL_SPEED.to_string(), 0.5);
        Self {
            task_id,
            episode_limit: if task_id == TaskId::Juggle { 400 } else { 200 },
            eps_position: 0.02,
            eps_velocity: 0.1,
            v_min_strike: 0.5,
            v_min_up: 0.5,
            juggle_rise: 0.3,
            juggle_hits_success: 4,
            block_move_min: 0.05,
            crowd_spread_min: 0.04,
            goal_radius: 0.08,
            goal_speed: 0.6,
            reward_weights: w,
            reg_lambda: 0.1,
            goal_conditioned: task_id.goal_conditioned(),
            n_blocks: task_id.default_blocks(),
        }
    }

    pub fn weight(&self, name: &str) -> f64 {
        self.reward_weights.get(name).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("eps_position", self.eps_position),
            ("eps_velocity", self.eps_velocity),
            ("v_min_strike", self.v_min_strike),
            ("v_min_up", self.v_min_up),
            ("juggle_rise", self.juggle_rise),
            ("block_move_min", self.block_move_min),
            ("crowd_spread_min", self.crowd_spread_min),
            ("goal_radius", self.goal_radius),
            ("goal_speed", self.goal_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(EnvError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.episode_limit == 0 || self.juggle_hits_success == 0 {
            return Err(EnvError::InvalidConfig(
                "episode_limit and juggle_hits_success must be at least 1".into(),
            ));
        }
        if self.goal_conditioned != self.task_id.goal_conditioned() {
            return Err(EnvError::InvalidConfig(format!(
                "goal_conditioned must be {} for {}",
                self.task_id.goal_conditioned(),
                self.task_id
            )));
        }
        if !(self.reg_lambda >= 0.0) || self.reward_weights.values().any(|w| !w.is_finite()) {
            return Err(EnvError::InvalidConfig("reward weights must be finite".into()));
        }
        Ok(())
    }

    /// Length of the goal vector (0 when not goal-conditioned).
    pub fn goal_dim(&self) -> usize {
        match (self.goal_conditioned, self.task_id.velocity_goal()) {
            (false, _) => 0,
            (true, false) => 2,
            (true, true) => 4,
        }
    }

    pub fn obs_dim(&self) -> usize {
        8 + self.goal_dim() + 2 * self.n_blocks
    }

    /// Names of the observation entries, in order.
    pub fn obs_layout(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "paddle_x", "paddle_y", "paddle_vx", "paddle_vy", "puck_x", "puck_y", "puck_vx",
            "puck_vy",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if self.goal_dim() >= 2 {
            names.extend(["goal_x".to_string(), "goal_y".to_string()]);
        }
        if self.goal_dim() == 4 {
            names.extend(["goal_vx".to_string(), "goal_vy".to_string()]);
        }
        for i in 0..self.n_blocks {
            names.push(format!("block{i}_x"));
            names.push(format!("block{i}_y"));
        }
        names
    }

    /// Reward component names this task can emit.
    pub fn reward_components(&self) -> Vec<&'static str> {
        let mut c = Vec::new();
        match self.task_id {
            TaskId::Reach => c.extend([weights::DISTANCE, weights::SUCCESS]),
            TaskId::ReachVelocity => {
                c.extend([weights::DISTANCE, weights::VELOCITY, weights::SUCCESS])
            }
            TaskId::Touch => c.push(weights::TOUCH),
            TaskId::Juggle => c.push(weights::JUGGLE),
            TaskId::StrikeCrowd => c.extend([weights::SPREAD, weights::SUCCESS]),
            TaskId::Strike | TaskId::PuckVelocity | TaskId::MoveBlock | TaskId::HitGoal => {
                c.push(weights::SUCCESS)
            }
            TaskId::HitGoalVelocity => c.extend([
                weights::GOAL_DISTANCE,
                weights::GOAL_COSINE,
                weights::GOAL_SPEED,
                weights::SUCCESS,
            ]),
        }
        if !matches!(self.task_id, TaskId::Reach | TaskId::ReachVelocity) {
            c.push(weights::PUCK_DISTANCE);
        }
        c.push("regularization");
        c
    }
}

/// Machine-readable description of every task with default settings.
pub fn task_catalog() -> serde_json::Value {
    let tasks: Vec<serde_json::Value> = TaskId::ALL
        .iter()
        .map(|&t| {
            let spec = TaskSpec::default_for(t);
            serde_json::json!({
                "id": t.name(),
                "label": t.short_label(),
                "obs_dim": spec.obs_dim(),
                "act_dim": 2,
                "goal_conditioned": spec.goal_conditioned,
                "terminates_on_success": t.terminates_on_success(),
                "obs_layout": spec.obs_layout(),
                "reward_components": spec.reward_components(),
                "spec": spec,
            })
        })
        .collect();
    serde_json::json!({ "version": 1, "tasks": tasks })
}
