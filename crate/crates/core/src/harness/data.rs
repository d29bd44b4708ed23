use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::datasets::{read_dataset, record_episode, Source, TrajectoryFile, TrajectoryHeader};
use crate::env::{Env, EnvConfig, GoalSample, TaskId};
use crate::learn::{run_episode, HERConfig, HerStrategy};
use crate::nn::PolicyFile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub directory: PathBuf,
    pub episodes: usize,
    pub transitions: usize,
    pub successes: usize,
}

fn policy_env_config(file: &PolicyFile, task_id: TaskId) -> EnvConfig {
    file.meta
        .get("env_config")
        .and_then(|v| serde_json::from_value::<EnvConfig>(v.clone()).ok())
        .filter(|c| c.task.task_id == task_id)
        .unwrap_or_else(|| EnvConfig::default_for(task_id))
}

/// Rolls out the greedy policy in `policy_path` until at least `min_steps`
/// transitions are recorded, one file per episode.
pub fn collect_expert(
    policy_path: &Path,
    task_id: TaskId,
    min_steps: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<CollectSummary, HarnessError> {
    let file = PolicyFile::load(policy_path)?;
    let env_config = policy_env_config(&file, task_id);
    if file.obs_layout != env_config.task.obs_layout() {
        return Err(HarnessError::LayoutMismatch {
            task: task_id.to_string(),
            policy: file.obs_layout.len(),
            task_dims: env_config.task.obs_dim(),
        });
    }
    let policy = file.to_policy()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut env = Env::new(env_config, seed)?;
    let mut summary = CollectSummary {
        directory: out_dir.to_path_buf(),
        episodes: 0,
        transitions: 0,
        successes: 0,
    };
    while summary.transitions < min_steps {
        let tf = record_episode(&mut env, Source::Policy, |obs| Ok(policy.mean_action(obs)?))?;
        tf.write(&out_dir.join(format!("ep{:06}.jsonl", summary.episodes)))?;
        summary.episodes += 1;
        summary.transitions += tf.steps.len();
        summary.successes += tf.steps.last().is_some_and(|s| s.success) as usize;
    }
    Ok(summary)
}

/// Replays `tf`'s actions from its initial world under `goal`, stopping
/// after `len` steps or when the episode ends.
fn resimulate(tf: &TrajectoryFile, config: &EnvConfig, goal: GoalSample, len: usize) -> Result<TrajectoryFile, HarnessError> {
    let mut env = Env::new(config.clone(), tf.header.seed)?;
    env.reset_to(tf.initial_world.clone(), Some(goal));
    let mut header = TrajectoryHeader::for_env(&env, tf.header.source);
    header.participant_id = tf.header.participant_id.clone();
    let mut i = 0;
    let (traj, _) = run_episode(&mut env, |_| {
        let a = tf.steps[i.min(tf.steps.len() - 1)].action.clone();
        i += 1;
        Ok(a)
    })?;
    let mut steps = traj.transitions;
    steps.truncate(len);
    if let Some(last) = steps.last_mut() {
        if !last.done {
            last.truncated = true;
        }
    }
    Ok(TrajectoryFile {
        header,
        initial_world: tf.initial_world.clone(),
        steps,
    })
}

/// Writes hindsight copies of every goal-conditioned episode in `in_dir`.
///
/// Each copy re-simulates the recorded actions with an achieved goal as the
/// desired goal, so the output replays exactly. `final` yields one copy per
/// episode; `future` yields `k` copies whose goals come from randomly chosen
/// steps, each cut at the step the goal was taken from.
pub fn relabel_dataset(in_dir: &Path, her: &HERConfig, out_dir: &Path, seed: u64) -> Result<CollectSummary, HarnessError> {
    let data = read_dataset(in_dir, None)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = CollectSummary {
        directory: out_dir.to_path_buf(),
        episodes: 0,
        transitions: 0,
        successes: 0,
    };
    for (file, tf) in data.index.files.iter().zip(&data.episodes) {
        let config = tf.header.resolve_config()?;
        if !config.task.goal_conditioned {
            return Err(crate::learn::LearnError::NotGoalConditioned(config.task.task_id).into());
        }
        let n = tf.steps.len();
        if n == 0 {
            continue;
        }
        let picks: Vec<usize> = match her.strategy {
            HerStrategy::Final => vec![n - 1],
            HerStrategy::Future => (0..her.k.max(1)).map(|_| rng.random_range(0..n)).collect(),
        };
        let stem = file.file.trim_end_matches(".jsonl");
        for (j, t) in picks.into_iter().enumerate() {
            let achieved = tf.steps[t]
                .achieved_goal
                .as_deref()
                .ok_or_else(|| HarnessError::Config(format!("{}: step {t} has no achieved goal", file.file)))?;
            let goal = GoalSample::from_slice(achieved);
            let out = resimulate(tf, &config, goal, t + 1)?;
            let path = out_dir.join(format!("{stem}_her{j}.jsonl"));
            out.write(&path)?;
            summary.episodes += 1;
            summary.transitions += out.steps.len();
            summary.successes += out.steps.last().is_some_and(|s| s.success) as usize;
        }
    }
    Ok(summary)
}
