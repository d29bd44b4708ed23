use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LearnError, Transition};
use crate::env::{goal_reward, weights, with_goal, EnvConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HerStrategy {
    Final,
    Future,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HERConfig {
    pub strategy: HerStrategy,
    pub k: usize,
}

impl Default for HERConfig {
    fn default() -> Self {
        Self {
            strategy: HerStrategy::Future,
            k: 4,
        }
    }
}

/// One episode of a goal-conditioned task. `initial_achieved_goal` is the
/// achieved goal at reset, before the first transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial_achieved_goal: Vec<f64>,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    fn achieved_before(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.initial_achieved_goal
        } else {
            self.transitions[t - 1].achieved_goal.as_deref().unwrap_or(&[])
        }
    }

    fn achieved_after(&self, t: usize) -> &[f64] {
        self.transitions[t].achieved_goal.as_deref().unwrap_or(&[])
    }
}

/// Goal-dependent reward of step `t` under `goal`, with the success bonus
/// paid on the first success only, and the sticky success flag.
fn goal_part(config: &EnvConfig, traj: &Trajectory, t: usize, goal: &[f64]) -> (f64, bool, bool) {
    let spec = &config.task;
    let mut succeeded_before = false;
    for j in 0..t {
        if goal_reward(spec, traj.achieved_before(j), traj.achieved_after(j), goal).success {
            succeeded_before = true;
            break;
        }
    }
    let out = goal_reward(spec, traj.achieved_before(t), traj.achieved_after(t), goal);
    let mut r: f64 = out.components.iter().map(|c| c.1).sum();
    let first = out.success && !succeeded_before;
    if first {
        r += spec.weight(weights::SUCCESS);
    }
    (r, succeeded_before || out.success, first)
}

fn relabel_one(config: &EnvConfig, traj: &Trajectory, t: usize, goal: &[f64]) -> Transition {
    let spec = &config.task;
    let table = &config.physics.table;
    let orig = &traj.transitions[t];
    let old_goal = orig.desired_goal.as_deref().unwrap_or(&[]);
    let (old_part, _, _) = goal_part(config, traj, t, old_goal);
    let (new_part, success, first) = goal_part(config, traj, t, goal);
    let ends = first && spec.task_id.terminates_on_success();
    let time_limit = orig.done && orig.truncated;
    Transition {
        obs: with_goal(spec, table, &orig.obs, goal),
        action: orig.action.clone(),
        reward: orig.reward - old_part + new_part,
        next_obs: with_goal(spec, table, &orig.next_obs, goal),
        done: ends || time_limit,
        truncated: time_limit && !ends,
        success,
        achieved_goal: orig.achieved_goal.clone(),
        desired_goal: Some(goal.to_vec()),
    }
}

/// Original transitions followed by hindsight copies whose desired goal is an
/// achieved goal from the same episode: the final one, or `k` drawn from
/// strictly later steps. Rewards, success and termination are recomputed.
pub fn her_relabel<R: Rng + ?Sized>(
    traj: &Trajectory,
    her: &HERConfig,
    config: &EnvConfig,
    rng: &mut R,
) -> Result<Vec<Transition>, LearnError> {
    let spec = &config.task;
    if !spec.goal_conditioned {
        return Err(LearnError::NotGoalConditioned(spec.task_id));
    }
    if her.strategy == HerStrategy::Future && her.k == 0 {
        return Err(LearnError::InvalidConfig("her: k must be at least 1 for future".into()));
    }
    let goal_dim = spec.goal_dim();
    if traj.initial_achieved_goal.len() != goal_dim
        || traj.transitions.iter().any(|t| {
            t.achieved_goal.as_ref().map(|g| g.len()) != Some(goal_dim)
                || t.desired_goal.as_ref().map(|g| g.len()) != Some(goal_dim)
        })
    {
        return Err(LearnError::LengthMismatch(format!("every step needs {goal_dim}-dim achieved and desired goals")));
    }
    let n = traj.transitions.len();
    let mut out = traj.transitions.clone();
    match her.strategy {
        HerStrategy::Final => {
            if let Some(last) = traj.transitions.last() {
                let g = last.achieved_goal.clone().expect("checked");
                out.extend((0..n).map(|t| relabel_one(config, traj, t, &g)));
            }
        }
        HerStrategy::Future => {
            for t in 0..n {
                if t + 1 >= n {
                    continue;
                }
                for _ in 0..her.k {
                    let j = rng.random_range(t + 1..n);
                    let g = traj.transitions[j].achieved_goal.clone().expect("checked");
                    out.push(relabel_one(config, traj, t, &g));
                }
            }
        }
    }
    Ok(out)
}
