use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::util::{check_transitions, obs_action_matrix, rows_matrix};
use super::{LearnError, Transition};
use crate::nn::{AdamConfig, AdamState, GaussianPolicy, Mlp, LOG_STD_MAX, LOG_STD_MIN};

/// `|tau - 1{u<0}| * u^2`.
pub fn expectile_loss(u: f64, tau: f64) -> f64 {
    let w = if u < 0.0 { 1.0 - tau } else { tau };
    w * u * u
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IQLConfig {
    pub expectile_tau: f64,
    pub awr_beta: f64,
    pub gamma: f64,
    pub polyak: f64,
    pub lr: f64,
    pub adv_clip: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for IQLConfig {
    fn default() -> Self {
        Self {
            expectile_tau: 0.6,
            awr_beta: 3.0,
            gamma: 0.99,
            polyak: 0.995,
            lr: 3e-4,
            adv_clip: 100.0,
            batch_size: 256,
            hidden: vec![256, 256],
            init_log_std: -0.5,
        }
    }
}

impl IQLConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.expectile_tau > 0.0 && self.expectile_tau < 1.0) {
            return Err(LearnError::InvalidConfig("iql: expectile_tau must be in (0,1)".into()));
        }
        if self.awr_beta <= 0.0 {
            return Err(LearnError::InvalidConfig("iql: awr_beta must be positive".into()));
        }
        if !(self.polyak > 0.0 && self.polyak < 1.0) {
            return Err(LearnError::InvalidConfig("iql: polyak must be in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct IqlLearner {
    pub q: [Mlp; 2],
    pub q_target: [Mlp; 2],
    pub v: Mlp,
    pub policy: GaussianPolicy,
    pub q_opt: [AdamState; 2],
    pub v_opt: AdamState,
    pub policy_opt: AdamState,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IqlMetrics {
    pub value_loss: f64,
    pub q_loss: f64,
    pub policy_loss: f64,
    pub mean_weight: f64,
}

impl IqlLearner {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, config: &IQLConfig, rng: &mut R) -> Self {
        let dims = |inp: usize, out: usize| {
            let mut d = vec![inp];
            d.extend(&config.hidden);
            d.push(out);
            d
        };
        let q = [Mlp::new(&dims(obs_dim + act_dim, 1), 1.0, rng), Mlp::new(&dims(obs_dim + act_dim, 1), 1.0, rng)];
        let v = Mlp::new(&dims(obs_dim, 1), 1.0, rng);
        let policy = GaussianPolicy::with_fixed_std(Mlp::new(&dims(obs_dim, act_dim), 0.01, rng), config.init_log_std);
        let adam = |n: usize| AdamState::new(n, AdamConfig::with_lr(config.lr));
        Self {
            q_opt: [adam(q[0].num_params()), adam(q[1].num_params())],
            v_opt: adam(v.num_params()),
            policy_opt: adam(policy.mean_net.num_params() + act_dim),
            q_target: q.clone(),
            q,
            v,
            policy,
        }
    }

    /// `min(Q1, Q2)` of the target networks.
    pub fn target_q(&self, obs: &[f64], action: &[f64]) -> Result<f64, LearnError> {
        let x: Vec<f64> = obs.iter().chain(action).copied().collect();
        Ok(self.q_target[0].forward(&x)?[0].min(self.q_target[1].forward(&x)?[0]))
    }
}

/// `r + gamma * V(s')`, with no bootstrap on terminal transitions.
pub fn iql_q_targets(v: &Mlp, batch: &[Transition], gamma: f64) -> Result<Vec<f64>, LearnError> {
    let s_next = rows_matrix(batch.iter().map(|t| t.next_obs.as_slice()), v.input_dim())?;
    let (v_next, _) = v.forward_batch(s_next.view())?;
    let targets: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(r, t)| {
            let c = t.continuation();
            if c == 0.0 {
                t.reward
            } else {
                t.reward + gamma * v_next[[r, 0]]
            }
        })
        .collect();
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(LearnError::NonFinite("Q target"));
    }
    Ok(targets)
}

/// One IQL step: expectile value regression, twin-Q TD regression toward
/// `r + gamma * V(s')`, advantage-weighted policy regression, then target
/// polyak averaging.
pub fn iql_update(learner: &mut IqlLearner, batch: &[Transition], config: &IQLConfig) -> Result<IqlMetrics, LearnError> {
    let obs_dim = learner.v.input_dim();
    let act_dim = learner.policy.act_dim();
    check_transitions(batch, obs_dim, act_dim)?;
    let n = batch.len();
    let m = n as f64;
    let obs_rows: Vec<&[f64]> = batch.iter().map(|t| t.obs.as_slice()).collect();
    let act_rows: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
    let s = rows_matrix(obs_rows.iter().copied(), obs_dim)?;
    let sa = obs_action_matrix(&obs_rows, &act_rows);

    let (qt1, _) = learner.q_target[0].forward_batch(sa.view())?;
    let (qt2, _) = learner.q_target[1].forward_batch(sa.view())?;
    let q_min: Vec<f64> = (0..n).map(|r| qt1[[r, 0]].min(qt2[[r, 0]])).collect();

    // value: expectile regression toward the target Q
    let (v, vcache) = learner.v.forward_batch(s.view())?;
    let mut vup = Array2::<f64>::zeros((n, 1));
    let mut value_loss = 0.0;
    for r in 0..n {
        let u = q_min[r] - v[[r, 0]];
        value_loss += expectile_loss(u, config.expectile_tau) / m;
        let w = if u < 0.0 { 1.0 - config.expectile_tau } else { config.expectile_tau };
        vup[[r, 0]] = -2.0 * w * u / m;
    }
    let (vg, _) = learner.v.backward_batch(&vcache, vup.view())?;
    learner.v_opt.step(learner.v.params_mut(), &vg)?;

    // twin Q toward r + gamma * V(s')
    let targets = iql_q_targets(&learner.v, batch, config.gamma)?;
    let mut q_loss = 0.0;
    for k in 0..2 {
        let (q, cache) = learner.q[k].forward_batch(sa.view())?;
        let mut up = Array2::<f64>::zeros((n, 1));
        for r in 0..n {
            let e = q[[r, 0]] - targets[r];
            q_loss += e * e / (2.0 * m);
            up[[r, 0]] = 2.0 * e / m;
        }
        let (g, _) = learner.q[k].backward_batch(&cache, up.view())?;
        learner.q_opt[k].step(learner.q[k].params_mut(), &g)?;
    }

    // advantage-weighted regression
    let (v_now, _) = learner.v.forward_batch(s.view())?;
    let weights: Vec<f64> = (0..n)
        .map(|r| (config.awr_beta * (q_min[r] - v_now[[r, 0]])).exp().min(config.adv_clip))
        .collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(LearnError::NonFinite("advantage weight"));
    }
    let policy_loss = awr_step(&mut learner.policy, &mut learner.policy_opt, &s, &act_rows, &weights)?;

    for k in 0..2 {
        let online = learner.q[k].clone();
        learner.q_target[k].polyak_from(&online, config.polyak);
    }
    Ok(IqlMetrics {
        value_loss,
        q_loss,
        policy_loss,
        mean_weight: weights.iter().sum::<f64>() / m,
    })
}

/// Adam step on `-mean(w * log pi(a|s))` for a fixed-std Gaussian policy.
fn awr_step(
    policy: &mut GaussianPolicy,
    opt: &mut AdamState,
    s: &Array2<f64>,
    actions: &[&[f64]],
    weights: &[f64],
) -> Result<f64, LearnError> {
    let act_dim = policy.act_dim();
    let n = actions.len();
    let m = n as f64;
    let raw = policy.log_std.clone().ok_or_else(|| LearnError::InvalidConfig("awr needs a fixed-std policy".into()))?;
    let ls: Vec<f64> = raw.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    let std: Vec<f64> = ls.iter().map(|v| v.exp()).collect();
    let (mean, cache) = policy.mean_net.forward_batch(s.view())?;
    let mut up = Array2::<f64>::zeros((n, act_dim));
    let mut g_ls = vec![0.0; act_dim];
    let mut loss = 0.0;
    for r in 0..n {
        let w = weights[r];
        let mu = mean.row(r).to_vec();
        loss -= w * crate::nn::diag_gaussian_log_prob(actions[r], &mu, &ls) / m;
        for d in 0..act_dim {
            let z = (actions[r][d] - mu[d]) / std[d];
            up[[r, d]] = -w * z / std[d] / m;
            g_ls[d] += -w * (z * z - 1.0) / m;
        }
    }
    for d in 0..act_dim {
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw[d]) {
            g_ls[d] = 0.0;
        }
    }
    let (mut grads, _) = policy.mean_net.backward_batch(&cache, up.view())?;
    grads.extend_from_slice(&g_ls);
    let mut params = policy.mean_net.params().to_vec();
    params.extend_from_slice(&raw);
    opt.step(&mut params, &grads)?;
    let np = policy.mean_net.num_params();
    policy.mean_net.params_mut().copy_from_slice(&params[..np]);
    policy.log_std = Some(params[np..].to_vec());
    Ok(loss)
}
