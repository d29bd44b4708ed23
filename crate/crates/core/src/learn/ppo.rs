use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::util::{clip_grad_norm, rows_matrix};
use super::LearnError;
use crate::nn::{
    diag_gaussian_entropy, AdamConfig, AdamState, GaussianPolicy, Mlp, LOG_STD_MAX, LOG_STD_MIN,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PPOConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub rollout_len: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub target_kl: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            epochs: 10,
            minibatch: 64,
            rollout_len: 2048,
            value_coef: 0.5,
            entropy_coef: 0.0,
            lr: 3e-4,
            max_grad_norm: 0.5,
            target_kl: 0.03,
            hidden: vec![256, 256],
            init_log_std: -0.5,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(format!("ppo: {m}")));
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return bad("gamma must be in [0,1) and lam in [0,1]");
        }
        if self.clip_eps <= 0.0 {
            return bad("clip_eps must be positive");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout_len == 0 {
            return bad("epochs, minibatch and rollout_len must be positive");
        }
        Ok(())
    }
}

/// Gaussian policy with a state-independent std, a value network, and
/// their optimizers. Policy optimizer covers `mean_net` params then `log_std`.
#[derive(Clone, Debug)]
pub struct ActorCritic {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub policy_opt: AdamState,
    pub value_opt: AdamState,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, config: &PPOConfig, rng: &mut R) -> Self {
        let dims = |out: usize| {
            let mut d = vec![obs_dim];
            d.extend(&config.hidden);
            d.push(out);
            d
        };
        let policy = GaussianPolicy::with_fixed_std(Mlp::new(&dims(act_dim), 0.01, rng), config.init_log_std);
        let value = Mlp::new(&dims(1), 1.0, rng);
        Self::from_parts(policy, value, config.lr)
    }

    pub fn from_parts(policy: GaussianPolicy, value: Mlp, lr: f64) -> Self {
        let np = policy.mean_net.num_params() + policy.act_dim();
        let nv = value.num_params();
        Self {
            policy,
            value,
            policy_opt: AdamState::new(np, AdamConfig::with_lr(lr)),
            value_opt: AdamState::new(nv, AdamConfig::with_lr(lr)),
        }
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64, LearnError> {
        Ok(self.value.forward(obs)?[0])
    }
}

/// One rollout's worth of on-policy data. Advantages are used as given;
/// normalize them beforehand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PpoBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn check(&self) -> Result<(), LearnError> {
        let n = self.obs.len();
        if n == 0 {
            return Err(LearnError::EmptyBatch);
        }
        if [self.actions.len(), self.old_log_probs.len(), self.advantages.len(), self.returns.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(LearnError::LengthMismatch("ppo batch fields differ in length".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoMetrics {
    /// Clipped surrogate over the whole batch before any update.
    pub initial_surrogate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
    pub early_stopped: bool,
}

struct Surrogate {
    log_probs: Vec<f64>,
    ratios: Vec<f64>,
}

fn evaluate(policy: &GaussianPolicy, means: &Array2<f64>, actions: &[&Vec<f64>], old: &[f64]) -> Surrogate {
    let log_std = policy.log_std.as_ref().expect("fixed-std policy");
    let ls: Vec<f64> = log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    let mut log_probs = Vec::with_capacity(actions.len());
    for (r, a) in actions.iter().enumerate() {
        let mean = means.row(r).to_vec();
        log_probs.push(crate::nn::diag_gaussian_log_prob(a, &mean, &ls));
    }
    let ratios = log_probs.iter().zip(old).map(|(n, o)| (n - o).exp()).collect();
    Surrogate { log_probs, ratios }
}

/// Clipped-surrogate PPO over `config.epochs` passes of shuffled minibatches.
/// Stops early once the minibatch KL estimate exceeds `config.target_kl`.
pub fn ppo_update<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    batch: &PpoBatch,
    config: &PPOConfig,
    rng: &mut R,
) -> Result<PpoMetrics, LearnError> {
    batch.check()?;
    if ac.policy.log_std.is_none() || ac.policy.squash {
        return Err(LearnError::InvalidConfig("ppo needs an unsquashed fixed-std policy".into()));
    }
    let obs_dim = ac.policy.obs_dim();
    let act_dim = ac.policy.act_dim();
    if let Some(a) = batch.actions.iter().find(|a| a.len() != act_dim) {
        return Err(LearnError::LengthMismatch(format!("action has {} dims, policy {act_dim}", a.len())));
    }
    let eps = config.clip_eps;
    let mut metrics = PpoMetrics::default();

    {
        let all = rows_matrix(batch.obs.iter().map(|o| o.as_slice()), obs_dim)?;
        let (means, _) = ac.policy.mean_net.forward_batch(all.view())?;
        let acts: Vec<&Vec<f64>> = batch.actions.iter().collect();
        let s = evaluate(&ac.policy, &means, &acts, &batch.old_log_probs);
        metrics.initial_surrogate = s
            .ratios
            .iter()
            .zip(&batch.advantages)
            .map(|(r, a)| (r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a))
            .sum::<f64>()
            / batch.len() as f64;
    }

    let mut idx: Vec<usize> = (0..batch.len()).collect();
    let (mut pl_sum, mut vl_sum, mut ent_sum, mut kl_sum, mut cf_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut mb_count = 0usize;
    'epochs: for _ in 0..config.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(config.minibatch) {
            let m = chunk.len() as f64;
            let obs = rows_matrix(chunk.iter().map(|&i| batch.obs[i].as_slice()), obs_dim)?;
            let acts: Vec<&Vec<f64>> = chunk.iter().map(|&i| &batch.actions[i]).collect();
            let old: Vec<f64> = chunk.iter().map(|&i| batch.old_log_probs[i]).collect();

            let (means, cache) = ac.policy.mean_net.forward_batch(obs.view())?;
            let s = evaluate(&ac.policy, &means, &acts, &old);
            let kl = old.iter().zip(&s.log_probs).map(|(o, n)| o - n).sum::<f64>() / m;
            if !kl.is_finite() {
                return Err(LearnError::Divergence { minibatch: mb_count });
            }
            if kl > config.target_kl {
                metrics.early_stopped = true;
                break 'epochs;
            }

            let raw_log_std = ac.policy.log_std.clone().expect("fixed std");
            let std: Vec<f64> = raw_log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX).exp()).collect();
            let entropy = diag_gaussian_entropy(
                &raw_log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect::<Vec<_>>(),
            );
            let mut upstream = Array2::<f64>::zeros((chunk.len(), act_dim));
            let mut g_log_std = vec![0.0; act_dim];
            let mut loss = 0.0;
            let mut clipped = 0usize;
            for (r, &i) in chunk.iter().enumerate() {
                let adv = batch.advantages[i];
                let ratio = s.ratios[r];
                let unclipped = ratio * adv;
                let clipped_v = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
                loss -= unclipped.min(clipped_v) / m;
                let active = unclipped <= clipped_v;
                if (ratio - 1.0).abs() > eps {
                    clipped += 1;
                }
                if !active {
                    continue;
                }
                // d(-ratio*adv)/d(log_prob) = -ratio*adv
                let coef = -ratio * adv / m;
                for d in 0..act_dim {
                    let z = (acts[r][d] - means[[r, d]]) / std[d];
                    upstream[[r, d]] = coef * z / std[d];
                    g_log_std[d] += coef * (z * z - 1.0);
                }
            }
            loss -= config.entropy_coef * entropy;
            if !loss.is_finite() {
                return Err(LearnError::Divergence { minibatch: mb_count });
            }
            for (d, g) in g_log_std.iter_mut().enumerate() {
                *g -= config.entropy_coef;
                if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_log_std[d]) {
                    *g = 0.0;
                }
            }
            let (mut grads, _) = ac.policy.mean_net.backward_batch(&cache, upstream.view())?;
            grads.extend_from_slice(&g_log_std);
            clip_grad_norm(&mut grads, config.max_grad_norm);
            let mut params = ac.policy.mean_net.params().to_vec();
            params.extend_from_slice(&raw_log_std);
            ac.policy_opt.step(&mut params, &grads)?;
            let np = ac.policy.mean_net.num_params();
            ac.policy.mean_net.params_mut().copy_from_slice(&params[..np]);
            ac.policy.log_std = Some(params[np..].to_vec());

            let (values, vcache) = ac.value.forward_batch(obs.view())?;
            let mut vup = Array2::<f64>::zeros((chunk.len(), 1));
            let mut vloss = 0.0;
            for (r, &i) in chunk.iter().enumerate() {
                let err = values[[r, 0]] - batch.returns[i];
                vloss += err * err / m;
                vup[[r, 0]] = 2.0 * config.value_coef * err / m;
            }
            if !vloss.is_finite() {
                return Err(LearnError::Divergence { minibatch: mb_count });
            }
            let (mut vgrads, _) = ac.value.backward_batch(&vcache, vup.view())?;
            clip_grad_norm(&mut vgrads, config.max_grad_norm);
            ac.value_opt.step(ac.value.params_mut(), &vgrads)?;

            pl_sum += loss;
            vl_sum += vloss;
            ent_sum += entropy;
            kl_sum += kl;
            cf_sum += clipped as f64 / m;
            mb_count += 1;
        }
    }
    if mb_count > 0 {
        let n = mb_count as f64;
        metrics.policy_loss = pl_sum / n;
        metrics.value_loss = vl_sum / n;
        metrics.entropy = ent_sum / n;
        metrics.approx_kl = kl_sum / n;
        metrics.clip_fraction = cf_sum / n;
    }
    metrics.minibatches = mb_count;
    Ok(metrics)
}
