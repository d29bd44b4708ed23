use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Algorithm, HarnessError};
use crate::env::{Env, EnvConfig, TaskId};
use crate::nn::{GaussianPolicy, PolicyFile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Greedy (policy mean) evaluation results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: TaskId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    pub per_seed: Vec<SeedResult>,
    pub mean: f64,
    pub episodes_per_seed: usize,
    pub episodes: usize,
    pub action_selection: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
}

/// Runs `n_episodes` greedy episodes per seed in fresh environments.
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    env_config: &EnvConfig,
    n_episodes: usize,
    seeds: &[u64],
) -> Result<EvalReport, HarnessError> {
    let spec = &env_config.task;
    if policy.obs_dim() != spec.obs_dim() {
        return Err(HarnessError::LayoutMismatch {
            task: spec.task_id.to_string(),
            policy: policy.obs_dim(),
            task_dims: spec.obs_dim(),
        });
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut env = Env::new(env_config.clone(), seed)?;
        let mut successes = 0usize;
        let mut total = 0.0;
        for _ in 0..n_episodes {
            let mut obs = env.reset();
            loop {
                let a = policy.mean_action(&obs)?;
                let r = env.step([a[0], a[1]])?;
                total += r.reward;
                obs = r.observation;
                if r.done {
                    successes += r.info.success as usize;
                    break;
                }
            }
        }
        let n = n_episodes.max(1) as f64;
        per_seed.push(SeedResult {
            seed,
            success_rate: successes as f64 / n,
            mean_return: total / n,
        });
    }
    let mean = if per_seed.is_empty() {
        0.0
    } else {
        per_seed.iter().map(|s| s.success_rate).sum::<f64>() / per_seed.len() as f64
    };
    Ok(EvalReport {
        task_id: spec.task_id,
        algorithm: None,
        mean,
        episodes_per_seed: n_episodes,
        episodes: n_episodes * per_seed.len(),
        per_seed,
        action_selection: "greedy mean".into(),
        policy: None,
    })
}

/// Loads a policy file and evaluates it on `task_id`.
///
/// Physics and task settings come from the file's metadata when present,
/// otherwise from the task defaults.
pub fn evaluate(policy_file: &Path, task_id: TaskId, n_episodes: usize, seeds: &[u64]) -> Result<EvalReport, HarnessError> {
    let file = PolicyFile::load(policy_file)?;
    let env_config = file
        .meta
        .get("env_config")
        .and_then(|v| serde_json::from_value::<EnvConfig>(v.clone()).ok())
        .filter(|c| c.task.task_id == task_id)
        .unwrap_or_else(|| EnvConfig::default_for(task_id));
    let expected = env_config.task.obs_layout();
    if file.obs_layout != expected {
        return Err(HarnessError::LayoutMismatch {
            task: task_id.to_string(),
            policy: file.obs_layout.len(),
            task_dims: expected.len(),
        });
    }
    let policy = file.to_policy()?;
    let mut report = evaluate_policy(&policy, &env_config, n_episodes, seeds)?;
    report.algorithm = file.meta.get("algorithm").and_then(|v| serde_json::from_value(v.clone()).ok());
    report.policy = Some(policy_file.display().to_string());
    Ok(report)
}
