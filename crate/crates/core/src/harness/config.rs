use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::env::{EnvConfig, TaskId, TaskSpec};
use crate::learn::{HERConfig, IQLConfig, PPOConfig, SACConfig};
use crate::physics::PhysicsParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bc,
    Iql,
    Ppo,
    SacHer,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Bc, Algorithm::Iql, Algorithm::Ppo, Algorithm::SacHer];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Bc => "BC",
            Algorithm::Iql => "IQL",
            Algorithm::Ppo => "PPO",
            Algorithm::SacHer => "SAC+HER",
        }
    }

    pub fn offline(self) -> bool {
        matches!(self, Algorithm::Bc | Algorithm::Iql)
    }

    /// PPO for plain tasks, SAC+HER for goal-conditioned ones.
    pub fn default_for(task: TaskId) -> Self {
        if task.goal_conditioned() {
            Algorithm::SacHer
        } else {
            Algorithm::Ppo
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 256,
            hidden: vec![256, 256],
        }
    }
}

/// Everything one training run needs. Saved with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task_id: TaskId,
    pub algorithm: Algorithm,
    pub physics: PhysicsParams,
    pub task: TaskSpec,
    pub ppo: PPOConfig,
    pub sac: SACConfig,
    pub her: HERConfig,
    pub iql: IQLConfig,
    pub bc: BcConfig,
    /// Environment steps for online methods, gradient steps for offline ones.
    pub total_steps: u64,
    pub eval_every: u64,
    pub n_eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Offline data for bc and iql.
    pub dataset_dir: Option<PathBuf>,
    /// Stop a seed once its periodic evaluation reaches this success rate.
    pub target_success: Option<f64>,
}

impl RunConfig {
    pub fn defaults(task_id: TaskId, algorithm: Algorithm) -> Self {
        let seeds = if task_id.goal_conditioned() { vec![0] } else { vec![0, 1, 2, 3, 4] };
        Self {
            task_id,
            algorithm,
            physics: PhysicsParams::default(),
            task: TaskSpec::default_for(task_id),
            ppo: PPOConfig::default(),
            sac: SACConfig::default(),
            her: HERConfig::default(),
            iql: IQLConfig::default(),
            bc: BcConfig::default(),
            total_steps: 1_000_000,
            eval_every: 50_000,
            n_eval_episodes: 50,
            seeds,
            output_dir: PathBuf::from(format!("runs/{}_{}", task_id.name(), algorithm.label().to_lowercase())),
            dataset_dir: None,
            target_success: None,
        }
    }

    /// Parses a possibly partial config: `task_id` and `algorithm` are
    /// required, every other field falls back to the defaults for that pair.
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let user: serde_json::Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let task_id: TaskId = user
            .get("task_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| HarnessError::Config("missing task_id".into()))?
            .parse()
            .map_err(|e: crate::env::EnvError| HarnessError::Config(e.to_string()))?;
        let algorithm = match user.get("algorithm") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| HarnessError::Config(format!("algorithm: {e}")))?,
            None => Algorithm::default_for(task_id),
        };
        let mut merged = serde_json::to_value(Self::defaults(task_id, algorithm)).expect("defaults serialize");
        merge(&mut merged, &user);
        merged["task_id"] = serde_json::to_value(task_id).expect("task id");
        let cfg: Self = serde_json::from_value(merged).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Canonical JSON with all defaults inlined.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            physics: self.physics.clone(),
            task: self.task.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        if self.total_steps == 0 {
            return Err(HarnessError::Config("total_steps must be positive".into()));
        }
        if self.task.task_id != self.task_id {
            return Err(HarnessError::Config(format!(
                "task settings are for {} but task_id is {}",
                self.task.task_id, self.task_id
            )));
        }
        if self.algorithm == Algorithm::SacHer && !self.task_id.goal_conditioned() {
            return Err(HarnessError::Config(format!("sac_her needs a goal-conditioned task, not {}", self.task_id)));
        }
        self.env_config().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.ppo.validate()?;
        self.sac.validate()?;
        self.iql.validate()?;
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, over: &serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
