use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::util::{check_transitions, obs_action_matrix, rows_matrix};
use super::{LearnError, Transition};
use crate::nn::{
    diag_gaussian_log_prob, tanh_log_derivative, AdamConfig, AdamState, GaussianPolicy, Mlp, LOG_STD_MAX,
    LOG_STD_MIN,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SACConfig {
    pub gamma: f64,
    pub polyak: f64,
    pub lr: f64,
    pub target_entropy: f64,
    pub init_alpha: f64,
    /// When false the temperature stays at `init_alpha`.
    pub tune_alpha: bool,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub learning_starts: usize,
}

impl Default for SACConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            polyak: 0.995,
            lr: 3e-4,
            target_entropy: -2.0,
            init_alpha: 0.1,
            tune_alpha: true,
            batch_size: 256,
            hidden: vec![256, 256],
            buffer_capacity: 1_000_000,
            learning_starts: 1000,
        }
    }
}

impl SACConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(self.polyak > 0.0 && self.polyak < 1.0) {
            return Err(LearnError::InvalidConfig("sac: polyak must be in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) || self.init_alpha < 0.0 {
            return Err(LearnError::InvalidConfig("sac: gamma in [0,1) and init_alpha >= 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SacLearner {
    pub policy: GaussianPolicy,
    pub q: [Mlp; 2],
    pub q_target: [Mlp; 2],
    pub log_alpha: f64,
    pub policy_opt: AdamState,
    pub q_opt: [AdamState; 2],
    pub alpha_opt: AdamState,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SacMetrics {
    pub q_loss: f64,
    pub policy_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

impl SacLearner {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, config: &SACConfig, rng: &mut R) -> Self {
        let dims = |inp: usize, out: usize| {
            let mut d = vec![inp];
            d.extend(&config.hidden);
            d.push(out);
            d
        };
        let q = [Mlp::new(&dims(obs_dim + act_dim, 1), 1.0, rng), Mlp::new(&dims(obs_dim + act_dim, 1), 1.0, rng)];
        let policy = GaussianPolicy::with_std_head(Mlp::new(&dims(obs_dim, 2 * act_dim), 0.01, rng), true);
        let adam = |n: usize| AdamState::new(n, AdamConfig::with_lr(config.lr));
        Self {
            policy_opt: adam(policy.mean_net.num_params()),
            q_opt: [adam(q[0].num_params()), adam(q[1].num_params())],
            alpha_opt: adam(1),
            log_alpha: config.init_alpha.max(1e-300).ln(),
            q_target: q.clone(),
            q,
            policy,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn q_min(&self, obs: &[f64], action: &[f64]) -> Result<f64, LearnError> {
        let x: Vec<f64> = obs.iter().chain(action).copied().collect();
        Ok(self.q[0].forward(&x)?[0].min(self.q[1].forward(&x)?[0]))
    }
}

struct Reparam {
    actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    noise: Vec<Vec<f64>>,
    means: Array2<f64>,
}

fn sample_batch<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    s: &Array2<f64>,
    rng: &mut R,
) -> Result<(Reparam, crate::nn::ForwardCache), LearnError> {
    let (out, cache) = policy.mean_net.forward_batch(s.view())?;
    let k = policy.act_dim();
    let mut actions = Vec::with_capacity(s.nrows());
    let mut log_probs = Vec::with_capacity(s.nrows());
    let mut noise = Vec::with_capacity(s.nrows());
    for r in 0..s.nrows() {
        let row = out.row(r).to_vec();
        let mean = &row[..k];
        let ls: Vec<f64> = row[k..].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        let eps: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let u: Vec<f64> = (0..k).map(|d| mean[d] + ls[d].exp() * eps[d]).collect();
        let lp = diag_gaussian_log_prob(&u, mean, &ls) - u.iter().map(|&x| tanh_log_derivative(x)).sum::<f64>();
        actions.push(u.iter().map(|x| x.tanh()).collect());
        log_probs.push(lp);
        noise.push(eps);
    }
    Ok((Reparam { actions, log_probs, noise, means: out }, cache))
}

/// Soft TD targets `r + gamma * (min Q_target(s', a') - alpha * log pi(a'|s'))`
/// with `a'` sampled from the current policy; terminal transitions give `r`.
pub fn sac_td_targets<R: Rng + ?Sized>(
    learner: &SacLearner,
    batch: &[Transition],
    config: &SACConfig,
    rng: &mut R,
) -> Result<Vec<f64>, LearnError> {
    let alpha = learner.alpha();
    let s_next = rows_matrix(batch.iter().map(|t| t.next_obs.as_slice()), learner.policy.obs_dim())?;
    let (next, _) = sample_batch(&learner.policy, &s_next, rng)?;
    let next_obs_rows: Vec<&[f64]> = batch.iter().map(|t| t.next_obs.as_slice()).collect();
    let next_act_rows: Vec<&[f64]> = next.actions.iter().map(|a| a.as_slice()).collect();
    let sa_next = obs_action_matrix(&next_obs_rows, &next_act_rows);
    let (t1, _) = learner.q_target[0].forward_batch(sa_next.view())?;
    let (t2, _) = learner.q_target[1].forward_batch(sa_next.view())?;
    let targets: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(r, t)| {
            if t.continuation() == 0.0 {
                return t.reward;
            }
            let soft = t1[[r, 0]].min(t2[[r, 0]]) - alpha * next.log_probs[r];
            t.reward + config.gamma * soft
        })
        .collect();
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(LearnError::NonFinite("TD target"));
    }
    Ok(targets)
}

/// One SAC step: twin-Q TD regression, reparameterized policy step,
/// temperature step toward `target_entropy`, and target polyak averaging.
pub fn sac_update<R: Rng + ?Sized>(
    learner: &mut SacLearner,
    batch: &[Transition],
    config: &SACConfig,
    rng: &mut R,
) -> Result<SacMetrics, LearnError> {
    let obs_dim = learner.policy.obs_dim();
    let act_dim = learner.policy.act_dim();
    check_transitions(batch, obs_dim, act_dim)?;
    let n = batch.len();
    let m = n as f64;
    let alpha = learner.alpha();
    let obs_rows: Vec<&[f64]> = batch.iter().map(|t| t.obs.as_slice()).collect();
    let act_rows: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
    let s = rows_matrix(obs_rows.iter().copied(), obs_dim)?;

    let targets = sac_td_targets(learner, batch, config, rng)?;
    let sa = obs_action_matrix(&obs_rows, &act_rows);
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

    // actor: minimize alpha * log pi(a|s) - min Q(s, a), a = tanh(mean + std * eps)
    let (cur, pcache) = sample_batch(&learner.policy, &s, rng)?;
    let cur_rows: Vec<&[f64]> = cur.actions.iter().map(|a| a.as_slice()).collect();
    let sa_pi = obs_action_matrix(&obs_rows, &cur_rows);
    let (q1, c1) = learner.q[0].forward_batch(sa_pi.view())?;
    let (q2, c2) = learner.q[1].forward_batch(sa_pi.view())?;
    let mut pick = [Array2::<f64>::zeros((n, 1)), Array2::<f64>::zeros((n, 1))];
    let mut policy_loss = 0.0;
    for r in 0..n {
        let (qv, k) = if q1[[r, 0]] <= q2[[r, 0]] { (q1[[r, 0]], 0) } else { (q2[[r, 0]], 1) };
        pick[k][[r, 0]] = 1.0;
        policy_loss += (alpha * cur.log_probs[r] - qv) / m;
    }
    let (_, dx1) = learner.q[0].backward_batch(&c1, pick[0].view())?;
    let (_, dx2) = learner.q[1].backward_batch(&c2, pick[1].view())?;
    let mut up = Array2::<f64>::zeros((n, 2 * act_dim));
    for r in 0..n {
        for d in 0..act_dim {
            let a = cur.actions[r][d];
            let dq_da = dx1[[r, obs_dim + d]] + dx2[[r, obs_dim + d]];
            let raw_ls = cur.means[[r, act_dim + d]];
            let std = raw_ls.clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
            let eps = cur.noise[r][d];
            // d log pi / d u through the tanh correction is 2a; d a / d u = 1 - a^2
            let dl_du = alpha * 2.0 * a - dq_da * (1.0 - a * a);
            up[[r, d]] = dl_du / m;
            let in_range = (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls);
            up[[r, act_dim + d]] = if in_range { (dl_du * std * eps - alpha) / m } else { 0.0 };
        }
    }
    let (pg, _) = learner.policy.mean_net.backward_batch(&pcache, up.view())?;
    learner.policy_opt.step(learner.policy.mean_net.params_mut(), &pg)?;

    let mean_lp = cur.log_probs.iter().sum::<f64>() / m;
    if config.tune_alpha {
        let g = -(mean_lp + config.target_entropy);
        let mut la = [learner.log_alpha];
        learner.alpha_opt.step(&mut la, &[g])?;
        learner.log_alpha = la[0];
    }

    for k in 0..2 {
        let online = learner.q[k].clone();
        learner.q_target[k].polyak_from(&online, config.polyak);
    }
    Ok(SacMetrics {
        q_loss,
        policy_loss,
        alpha: learner.alpha(),
        entropy: -mean_lp,
    })
}
