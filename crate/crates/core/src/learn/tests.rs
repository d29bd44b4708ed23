use super::*;
use crate::env::{make_task, Env, EnvConfig, TaskId};
use crate::nn::{AdamConfig, AdamState, GaussianPolicy, Mlp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn transition(obs: Vec<f64>, action: Vec<f64>, reward: f64, next_obs: Vec<f64>, done: bool) -> Transition {
    Transition {
        obs,
        action,
        reward,
        next_obs,
        done,
        truncated: false,
        success: false,
        achieved_goal: None,
        desired_goal: None,
    }
}

#[test]
fn gae_single_terminal_step() {
    let (a, r) = compute_gae(&[1.0], &[0.0, 0.0], &[true], 0.99, 0.95).unwrap();
    assert_eq!((a, r), (vec![1.0], vec![1.0]));
}

#[test]
fn gae_two_step_hand_case() {
    let (a, _) = compute_gae(&[0.0, 1.0], &[0.0, 0.0, 0.0], &[false, false], 0.99, 0.95).unwrap();
    assert!((a[0] - 0.99 * 0.95).abs() < 1e-12);
    assert!((a[1] - 1.0).abs() < 1e-12);
}

#[test]
fn gae_lambda_zero_is_td_residual() {
    let r = [0.5, -0.2, 1.0];
    let v = [0.1, 0.4, -0.3, 0.2];
    let (a, _) = compute_gae(&r, &v, &[false, true, false], 0.9, 0.0).unwrap();
    assert_eq!(a[0], r[0] + 0.9 * v[1] - v[0]);
    assert_eq!(a[1], r[1] - v[1]);
    assert_eq!(a[2], r[2] + 0.9 * v[3] - v[2]);
}

#[test]
fn gae_rejects_missing_bootstrap() {
    assert!(matches!(
        compute_gae(&[1.0, 2.0], &[0.0, 0.0], &[false, false], 0.9, 0.9),
        Err(LearnError::LengthMismatch(_))
    ));
}

proptest! {
    #[test]
    fn gae_lambda_one_gives_discounted_reward_to_go(rewards in prop::collection::vec(-1.0f64..1.0, 1..40), gamma in 0.0f64..0.999) {
        let n = rewards.len();
        let (_, ret) = compute_gae(&rewards, &vec![0.0; n + 1], &vec![false; n], gamma, 1.0).unwrap();
        for t in 0..n {
            let mut g = 0.0;
            for k in (t..n).rev() {
                g = rewards[k] + gamma * g;
            }
            prop_assert!((ret[t] - g).abs() < 1e-12);
        }
    }

    #[test]
    fn expectile_half_is_half_square(u in -1e3f64..1e3) {
        prop_assert_eq!(expectile_loss(u, 0.5), 0.5 * u * u);
    }
}

#[test]
fn expectile_examples() {
    assert_eq!(expectile_loss(2.0, 0.5), 2.0);
    assert!((expectile_loss(1.0, 0.7) - 0.7).abs() < 1e-15);
    assert!((expectile_loss(-1.0, 0.7) - 0.3).abs() < 1e-15);
    assert!((expectile_loss(-2.0, 0.6) - 1.6).abs() < 1e-15);
}

fn small_ppo() -> PPOConfig {
    PPOConfig {
        hidden: vec![8],
        minibatch: 16,
        epochs: 1,
        ..Default::default()
    }
}

fn fresh_batch(ac: &ActorCritic, rng: &mut ChaCha8Rng, n: usize) -> PpoBatch {
    let mut b = PpoBatch::default();
    for _ in 0..n {
        let obs = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (a, lp) = ac.policy.sample(&obs, rng).unwrap();
        b.obs.push(obs);
        b.actions.push(a);
        b.old_log_probs.push(lp);
        b.advantages.push(rng.random_range(-1.0..1.0));
        b.returns.push(rng.random_range(-1.0..1.0));
    }
    b
}

#[test]
fn ppo_fresh_surrogate_is_mean_advantage() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = small_ppo();
    let mut ac = ActorCritic::new(2, 2, &cfg, &mut rng);
    let b = fresh_batch(&ac, &mut rng, 64);
    let mean = b.advantages.iter().sum::<f64>() / 64.0;
    let m = ppo_update(&mut ac, &b, &cfg, &mut rng).unwrap();
    assert!((m.initial_surrogate - mean).abs() < 1e-12);
}

#[test]
fn ppo_zero_advantage_leaves_policy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = PPOConfig { epochs: 3, ..small_ppo() };
    let mut ac = ActorCritic::new(2, 2, &cfg, &mut rng);
    let mut b = fresh_batch(&ac, &mut rng, 64);
    b.advantages.iter_mut().for_each(|a| *a = 0.0);
    let before = ac.policy.clone();
    let value_before = ac.value.clone();
    ppo_update(&mut ac, &b, &cfg, &mut rng).unwrap();
    assert_eq!(ac.policy, before);
    assert_ne!(ac.value, value_before);

    let cfg = PPOConfig { entropy_coef: 0.01, ..cfg };
    ppo_update(&mut ac, &b, &cfg, &mut rng).unwrap();
    let np = ac.policy.mean_net.params();
    assert_eq!(np, before.mean_net.params());
    assert!(ac.policy.log_std.as_ref().unwrap()[0] > before.log_std.as_ref().unwrap()[0]);
}

#[test]
fn ppo_divergence_names_minibatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = small_ppo();
    let mut ac = ActorCritic::new(2, 2, &cfg, &mut rng);
    let mut b = fresh_batch(&ac, &mut rng, 64);
    b.returns[40] = f64::NAN;
    let order_independent = ppo_update(&mut ac, &b, &cfg, &mut rng).unwrap_err();
    assert!(matches!(order_independent, LearnError::Divergence { .. }));
    assert!(order_independent.to_string().starts_with("divergence"));
}

#[test]
fn ppo_bandit_prefers_rewarded_action() {
    // One state; a[0] > 0 pays +1, otherwise -1. P(a[0] > 0) = Phi(mean / std).
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = PPOConfig {
        hidden: vec![8],
        minibatch: 32,
        epochs: 4,
        lr: 1e-2,
        ..Default::default()
    };
    let mut ac = ActorCritic::new(1, 2, &cfg, &mut rng);
    for _ in 0..200 {
        let mut b = PpoBatch::default();
        let mut rewards = Vec::new();
        for _ in 0..64 {
            let (a, lp) = ac.policy.sample(&[1.0], &mut rng).unwrap();
            rewards.push(if a[0] > 0.0 { 1.0 } else { -1.0 });
            b.obs.push(vec![1.0]);
            b.actions.push(a);
            b.old_log_probs.push(lp);
        }
        let v = ac.value_of(&[1.0]).unwrap();
        let mut adv: Vec<f64> = rewards.iter().map(|r| r - v).collect();
        b.returns = rewards.clone();
        normalize_advantages(&mut adv);
        b.advantages = adv;
        ppo_update(&mut ac, &b, &cfg, &mut rng).unwrap();
    }
    let (mean, log_std) = ac.policy.distribution(&[1.0]).unwrap();
    let z = mean[0] / log_std[0].exp();
    let p = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
    assert!(p > 0.95, "P(+1) = {p}");
}

/// Abramowitz-Stegun 7.1.26, absolute error below 1.5e-7.
fn erf(x: f64) -> f64 {
    let s = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t + 0.254829592)
            * t
            * (-x * x).exp();
    s * y
}

#[test]
fn bc_single_pair_loss() {
    let mut p = GaussianPolicy::with_fixed_std(Mlp::zeros(&[1, 1]), 0.0);
    let mut opt = AdamState::new(p.mean_net.num_params(), AdamConfig::default());
    let loss = bc_update(&mut p, &mut opt, &[vec![0.3]], &[vec![1.0]]).unwrap();
    assert_eq!(loss, 1.0);
}

#[test]
fn bc_perfect_policy_has_zero_loss() {
    let mut p = GaussianPolicy::with_fixed_std(Mlp::zeros(&[2, 2]), 0.0);
    let mut opt = AdamState::new(p.mean_net.num_params(), AdamConfig::default());
    let before = p.clone();
    let loss = bc_update(&mut p, &mut opt, &[vec![0.3, 0.1]], &[vec![0.0, 0.0]]).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(p, before);
}

#[test]
fn bc_dimension_mismatch() {
    let mut p = GaussianPolicy::with_fixed_std(Mlp::zeros(&[2, 2]), 0.0);
    let mut opt = AdamState::new(p.mean_net.num_params(), AdamConfig::default());
    assert!(bc_update(&mut p, &mut opt, &[vec![0.3, 0.1]], &[vec![0.0]]).is_err());
    assert!(bc_update(&mut p, &mut opt, &[vec![0.3]], &[vec![0.0, 0.0]]).is_err());
}

#[test]
fn bc_fits_linear_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut p = GaussianPolicy::with_fixed_std(Mlp::new(&[2, 16, 2], 0.1, &mut rng), 0.0);
    let mut opt = AdamState::new(p.mean_net.num_params(), AdamConfig::with_lr(3e-3));
    let sample = |rng: &mut ChaCha8Rng| {
        let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a = s.iter().map(|v| 0.5 * v).collect::<Vec<_>>();
        (s, a)
    };
    for _ in 0..2000 {
        let (obs, acts): (Vec<_>, Vec<_>) = (0..64).map(|_| sample(&mut rng)).unzip();
        bc_update(&mut p, &mut opt, &obs, &acts).unwrap();
    }
    let mut mse = 0.0;
    for _ in 0..500 {
        let (s, a) = sample(&mut rng);
        let m = p.mean_action(&s).unwrap();
        mse += ((m[0] - a[0]).powi(2) + (m[1] - a[1]).powi(2)) / 500.0;
    }
    assert!(mse < 1e-3, "held-out mse {mse}");
}

fn offline_batch(rng: &mut ChaCha8Rng, n: usize, done: bool) -> Vec<Transition> {
    (0..n)
        .map(|_| {
            transition(
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                rng.random_range(-1.0..1.0),
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                done,
            )
        })
        .collect()
}

#[test]
fn terminal_targets_are_rewards() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = offline_batch(&mut rng, 16, true);
    let iql = IqlLearner::new(2, 2, &IQLConfig { hidden: vec![8], ..Default::default() }, &mut rng);
    let y = iql_q_targets(&iql.v, &batch, 0.99).unwrap();
    let sac_cfg = SACConfig { hidden: vec![8], ..Default::default() };
    let sac = SacLearner::new(2, 2, &sac_cfg, &mut rng);
    let z = sac_td_targets(&sac, &batch, &sac_cfg, &mut rng).unwrap();
    for (i, t) in batch.iter().enumerate() {
        assert_eq!(y[i], t.reward);
        assert_eq!(z[i], t.reward);
    }
    let mut truncated = batch.clone();
    truncated.iter_mut().for_each(|t| t.truncated = true);
    let y = iql_q_targets(&iql.v, &truncated, 0.99).unwrap();
    assert!(y.iter().zip(&truncated).any(|(a, t)| *a != t.reward));
}

#[test]
fn awr_with_vanishing_beta_moves_like_bc() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = IQLConfig {
        hidden: vec![8],
        awr_beta: 1e-12,
        lr: 1e-3,
        ..Default::default()
    };
    let mut iql = IqlLearner::new(2, 2, &cfg, &mut rng);
    let batch = offline_batch(&mut rng, 32, false);
    let mut bc_policy = iql.policy.clone();
    let mut bc_opt = AdamState::new(bc_policy.mean_net.num_params(), AdamConfig::with_lr(cfg.lr));
    let start = iql.policy.mean_net.params().to_vec();
    iql_update(&mut iql, &batch, &cfg).unwrap();
    let obs: Vec<_> = batch.iter().map(|t| t.obs.clone()).collect();
    let acts: Vec<_> = batch.iter().map(|t| t.action.clone()).collect();
    bc_update(&mut bc_policy, &mut bc_opt, &obs, &acts).unwrap();
    // Equal weights make the AWR gradient a positive multiple of the BC
    // gradient, so the first Adam step is the same step.
    let da: Vec<f64> = iql.policy.mean_net.params().iter().zip(&start).map(|(a, s)| a - s).collect();
    let db: Vec<f64> = bc_policy.mean_net.params().iter().zip(&start).map(|(b, s)| b - s).collect();
    let dot: f64 = da.iter().zip(&db).map(|(a, b)| a * b).sum();
    let na = da.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = db.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(dot / (na * nb) > 0.999_999, "cosine {}", dot / (na * nb));
    assert!((na - nb).abs() < 1e-3 * nb);
}

#[test]
fn iql_rejects_bad_config() {
    assert!(IQLConfig { expectile_tau: 1.0, ..Default::default() }.validate().is_err());
    assert!(IQLConfig { awr_beta: 0.0, ..Default::default() }.validate().is_err());
    assert!(IQLConfig::default().validate().is_ok());
}

#[test]
fn temperature_moves_toward_target_entropy() {
    // Standard SAC temperature loss: alpha rises while entropy is below
    // target and falls while it is above.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = offline_batch(&mut rng, 32, false);
    for (target, rises) in [(-2.0, false), (10.0, true)] {
        let cfg = SACConfig {
            hidden: vec![8],
            target_entropy: target,
            init_alpha: 0.5,
            lr: 1e-3,
            ..Default::default()
        };
        let mut l = SacLearner::new(2, 2, &cfg, &mut rng);
        let mut prev = l.alpha();
        for _ in 0..20 {
            // freeze everything but the temperature
            let (policy, q, qt) = (l.policy.clone(), l.q.clone(), l.q_target.clone());
            let m = sac_update(&mut l, &batch, &cfg, &mut rng).unwrap();
            assert!(if rises { m.entropy < target } else { m.entropy > target });
            assert!(if rises { l.alpha() > prev } else { l.alpha() < prev });
            prev = l.alpha();
            l.policy = policy;
            l.q = q;
            l.q_target = qt;
        }
    }
}

#[test]
fn sac_fixed_alpha_stays_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = SACConfig { hidden: vec![8], tune_alpha: false, init_alpha: 0.3, ..Default::default() };
    let mut l = SacLearner::new(2, 2, &cfg, &mut rng);
    let batch = offline_batch(&mut rng, 16, false);
    sac_update(&mut l, &batch, &cfg, &mut rng).unwrap();
    assert!((l.alpha() - 0.3).abs() < 1e-12);
}

fn goal_episode(task: TaskId, seed: u64) -> (Env, Trajectory) {
    let mut env = make_task(task.name(), None, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (traj, _) = collect_episode(&mut env, |_| Ok(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])).unwrap();
    (env, traj)
}

#[test]
fn her_final_terminal_succeeds() {
    for seed in 0..5 {
        let (env, traj) = goal_episode(TaskId::Reach, seed);
        let n = traj.transitions.len();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = her_relabel(&traj, &HERConfig { strategy: HerStrategy::Final, k: 1 }, env.config(), &mut rng).unwrap();
        assert_eq!(out.len(), 2 * n);
        let last = out.last().unwrap();
        assert!(last.success);
    }
}

#[test]
fn her_future_draws_later_goals() {
    let (env, traj) = goal_episode(TaskId::Reach, 3);
    let short = Trajectory {
        initial_achieved_goal: traj.initial_achieved_goal.clone(),
        transitions: traj.transitions[..10].to_vec(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = her_relabel(&short, &HERConfig { strategy: HerStrategy::Future, k: 4 }, env.config(), &mut rng).unwrap();
    assert!(out.len() <= 10 * (1 + 4));
    for extra in &out[10..] {
        let t = short.transitions.iter().position(|x| x.obs[..8] == extra.obs[..8]).unwrap();
        let g = extra.desired_goal.as_ref().unwrap();
        let j = short.transitions.iter().position(|x| x.achieved_goal.as_ref() == Some(g)).unwrap();
        assert!(j > t);
    }
}

#[test]
fn her_rejects_plain_tasks() {
    let (_, traj) = goal_episode(TaskId::Reach, 0);
    let cfg = EnvConfig::default_for(TaskId::Touch);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(her_relabel(&traj, &HERConfig::default(), &cfg, &mut rng), Err(LearnError::NotGoalConditioned(_))));
}

#[test]
fn her_rewards_match_env_replay() {
    for task in [TaskId::Reach, TaskId::HitGoal, TaskId::ReachVelocity] {
        let mut env = make_task(task.name(), None, 12).unwrap();
        env.reset();
        let start = env.world().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut steps = Vec::new();
        let mut obs = env.observation();
        let init = env.achieved_goal().unwrap();
        let desired = env.goal().unwrap().to_vec(env.spec());
        loop {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let r = env.step(a).unwrap();
            steps.push(Transition {
                obs: obs.clone(),
                action: a.to_vec(),
                reward: r.reward,
                next_obs: r.observation.clone(),
                done: r.done,
                truncated: r.info.truncated,
                success: r.info.success,
                achieved_goal: r.info.achieved_goal.clone(),
                desired_goal: Some(desired.clone()),
            });
            obs = r.observation;
            if r.done {
                break;
            }
        }
        let traj = Trajectory { initial_achieved_goal: init, transitions: steps };
        let out = her_relabel(&traj, &HERConfig { strategy: HerStrategy::Future, k: 2 }, env.config(), &mut rng).unwrap();
        for t in &out[traj.transitions.len()..] {
            // replay the episode under the relabeled goal from the same start
            let goal = crate::env::GoalSample::from_slice(t.desired_goal.as_ref().unwrap());
            let mut replay = Env::new(env.config().clone(), 12).unwrap();
            replay.reset_to(start.clone(), Some(goal));
            let idx = traj.transitions.iter().position(|x| x.obs[..8] == t.obs[..8] && x.action == t.action).unwrap();
            let mut found = None;
            for (i, orig) in traj.transitions.iter().enumerate() {
                let r = replay.step([orig.action[0], orig.action[1]]);
                let Ok(r) = r else { break };
                if i == idx {
                    found = Some(r);
                    break;
                }
            }
            if let Some(r) = found {
                assert!((r.reward - t.reward).abs() < 1e-12, "{task}: {} vs {}", r.reward, t.reward);
                assert_eq!(r.info.success, t.success);
                assert_eq!(r.observation, t.next_obs);
            }
        }
    }
}
