use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{compute_gae, normalize_advantages, ActorCritic, LearnError, PPOConfig, PpoBatch, Trajectory, Transition};
use crate::env::Env;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_return: f64,
    pub length: u64,
    pub success: bool,
}

/// Keeps one environment running across PPO rollouts.
#[derive(Clone, Debug)]
pub struct PpoCollector {
    env: Env,
    obs: Vec<f64>,
    ep_return: f64,
    ep_len: u64,
}

impl PpoCollector {
    pub fn new(mut env: Env) -> Self {
        let obs = env.reset();
        Self {
            env,
            obs,
            ep_return: 0.0,
            ep_len: 0,
        }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Collects `config.rollout_len` steps with sampled actions and returns the
    /// batch with normalized advantages plus summaries of finished episodes.
    /// Time-limit endings bootstrap through the value of the final state.
    pub fn collect<R: Rng + ?Sized>(
        &mut self,
        ac: &ActorCritic,
        config: &PPOConfig,
        rng: &mut R,
    ) -> Result<(PpoBatch, Vec<EpisodeSummary>), LearnError> {
        let n = config.rollout_len;
        let mut batch = PpoBatch::default();
        let mut rewards = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n + 1);
        let mut dones = Vec::with_capacity(n);
        let mut finished = Vec::new();
        for _ in 0..n {
            let (u, lp) = ac.policy.sample(&self.obs, rng)?;
            let v = ac.value_of(&self.obs)?;
            let step = self.env.step([u[0], u[1]])?;
            let mut r = step.reward;
            self.ep_return += step.reward;
            self.ep_len += 1;
            if step.done && step.info.truncated {
                r += config.gamma * ac.value_of(&step.observation)?;
            }
            batch.obs.push(std::mem::take(&mut self.obs));
            batch.actions.push(u);
            batch.old_log_probs.push(lp);
            rewards.push(r);
            values.push(v);
            dones.push(step.done);
            if step.done {
                finished.push(EpisodeSummary {
                    episode_return: self.ep_return,
                    length: self.ep_len,
                    success: step.info.success,
                });
                self.ep_return = 0.0;
                self.ep_len = 0;
                self.obs = self.env.reset();
            } else {
                self.obs = step.observation;
            }
        }
        values.push(ac.value_of(&self.obs)?);
        let (mut adv, returns) = compute_gae(&rewards, &values, &dones, config.gamma, config.lam)?;
        normalize_advantages(&mut adv);
        batch.advantages = adv;
        batch.returns = returns;
        Ok((batch, finished))
    }
}

/// Runs one full episode from a fresh reset. `act` maps observations to
/// actions; the recorded action is the clamped one the environment applied.
pub fn collect_episode<F>(env: &mut Env, act: F) -> Result<(Trajectory, EpisodeSummary), LearnError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, LearnError>,
{
    env.reset();
    run_episode(env, act)
}

/// Like [`collect_episode`] but continues from the environment's current
/// state, which must be the start of an episode.
pub fn run_episode<F>(env: &mut Env, mut act: F) -> Result<(Trajectory, EpisodeSummary), LearnError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, LearnError>,
{
    let mut obs = env.observation();
    let initial_achieved_goal = env.achieved_goal().unwrap_or_default();
    let desired = env.goal().map(|g| g.to_vec(env.spec()));
    let mut transitions = Vec::new();
    let mut ret = 0.0;
    loop {
        let a = act(&obs)?;
        if a.len() != 2 {
            return Err(LearnError::LengthMismatch(format!("policy produced {} action dims, need 2", a.len())));
        }
        let applied = [a[0].clamp(-1.0, 1.0), a[1].clamp(-1.0, 1.0)];
        let step = env.step(applied)?;
        ret += step.reward;
        let done = step.done;
        transitions.push(Transition {
            obs: std::mem::take(&mut obs),
            action: applied.to_vec(),
            reward: step.reward,
            next_obs: step.observation.clone(),
            done,
            truncated: step.info.truncated,
            success: step.info.success,
            achieved_goal: step.info.achieved_goal.clone(),
            desired_goal: desired.clone(),
        });
        obs = step.observation;
        if done {
            let summary = EpisodeSummary {
                episode_return: ret,
                length: transitions.len() as u64,
                success: step.info.success,
            };
            return Ok((
                Trajectory {
                    initial_achieved_goal,
                    transitions,
                },
                summary,
            ));
        }
    }
}
