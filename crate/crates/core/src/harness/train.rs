use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::normalize_curve;
use super::{evaluate_policy, io_err, Algorithm, EvalReport, HarnessError, RunConfig, SeedResult};
use crate::datasets::read_dataset;
use crate::env::{Env, EnvConfig, ACT_DIM};
use crate::learn::{
    bc_update, her_relabel, iql_update, ppo_update, run_episode, sac_update, ActorCritic, IqlLearner, PpoCollector,
    ReplayBuffer, SacLearner, Transition,
};
use crate::nn::{AdamConfig, AdamState, GaussianPolicy, Mlp, PolicyFile};

/// Offset between a training seed and the seed of its evaluation environment.
const EVAL_SEED_OFFSET: u64 = 1_000_003;
/// Offline methods log a metrics row every this many gradient steps.
const OFFLINE_LOG_EVERY: u64 = 1000;
/// SAC logs a metrics row every this many environment steps.
const SAC_LOG_EVERY: u64 = 1000;

/// One line of `metrics.csv`. Empty cells mean "not measured at this row".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub step: u64,
    pub episodes: u64,
    pub episodic_return: Option<f64>,
    pub success_rate: Option<f64>,
    pub eval_success: Option<f64>,
    pub eval_return: Option<f64>,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub q_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub steps: u64,
    pub final_eval_success: f64,
    pub final_eval_return: f64,
    pub reached_target: bool,
    pub policy_file: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArtifacts {
    pub output_dir: PathBuf,
    pub config_path: PathBuf,
    pub metrics_csv: PathBuf,
    pub curve_csv: PathBuf,
    pub eval_report: PathBuf,
    pub seeds: Vec<SeedOutcome>,
}

impl TrainArtifacts {
    pub fn policy_files(&self) -> Vec<PathBuf> {
        self.seeds.iter().map(|s| s.policy_file.clone()).collect()
    }
}

struct SeedRun {
    rows: Vec<MetricsRow>,
    /// (step, eval mean return)
    curve: Vec<(u64, f64)>,
    policy: GaussianPolicy,
    steps: u64,
    last_eval: SeedResult,
    reached_target: bool,
}

/// Shared bookkeeping for periodic evaluation and early stopping.
struct Progress<'a> {
    cfg: &'a RunConfig,
    env_config: EnvConfig,
    seed: u64,
    next_eval: u64,
    rows: Vec<MetricsRow>,
    curve: Vec<(u64, f64)>,
    last_eval: Option<SeedResult>,
    reached_target: bool,
}

impl<'a> Progress<'a> {
    fn new(cfg: &'a RunConfig, seed: u64) -> Self {
        Self {
            cfg,
            env_config: cfg.env_config(),
            seed,
            next_eval: cfg.eval_every.max(1),
            rows: Vec::new(),
            curve: Vec::new(),
            last_eval: None,
            reached_target: false,
        }
    }

    /// Evaluates when `step` crossed the next checkpoint or the budget ended.
    /// Returns true when training should stop.
    fn checkpoint(&mut self, policy: &GaussianPolicy, step: u64, episodes: u64) -> Result<bool, HarnessError> {
        let last = step >= self.cfg.total_steps;
        if step < self.next_eval && !last {
            return Ok(false);
        }
        while self.next_eval <= step {
            self.next_eval += self.cfg.eval_every.max(1);
        }
        let r = self.evaluate(policy)?;
        self.rows.push(MetricsRow {
            seed: self.seed,
            step,
            episodes,
            eval_success: Some(r.success_rate),
            eval_return: Some(r.mean_return),
            ..Default::default()
        });
        self.curve.push((step, r.mean_return));
        self.reached_target = self.cfg.target_success.is_some_and(|t| r.success_rate >= t);
        self.last_eval = Some(r);
        Ok(last || self.reached_target)
    }

    fn evaluate(&self, policy: &GaussianPolicy) -> Result<SeedResult, HarnessError> {
        let eval_seed = self.seed.wrapping_add(EVAL_SEED_OFFSET);
        let mut rep = evaluate_policy(policy, &self.env_config, self.cfg.n_eval_episodes, &[eval_seed])?;
        let mut r = rep.per_seed.remove(0);
        r.seed = self.seed;
        Ok(r)
    }

    fn finish(self, policy: GaussianPolicy, steps: u64) -> Result<SeedRun, HarnessError> {
        let last_eval = match self.last_eval {
            Some(r) => r,
            None => self.evaluate(&policy)?,
        };
        Ok(SeedRun {
            rows: self.rows,
            curve: self.curve,
            policy,
            steps,
            last_eval,
            reached_target: self.reached_target,
        })
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn hidden_dims(inp: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    let mut d = vec![inp];
    d.extend(hidden);
    d.push(out);
    d
}

fn train_ppo(cfg: &RunConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = Env::new(cfg.env_config(), seed)?;
    let mut ac = ActorCritic::new(env.obs_dim(), ACT_DIM, &cfg.ppo, &mut rng);
    let mut collector = PpoCollector::new(env);
    let mut progress = Progress::new(cfg, seed);
    let (mut steps, mut episodes) = (0u64, 0u64);
    let mut ppo_cfg = cfg.ppo.clone();
    loop {
        // The last rollout is cut short so a run never exceeds its budget.
        let remaining = cfg.total_steps.saturating_sub(steps).max(1);
        ppo_cfg.rollout_len = cfg.ppo.rollout_len.min(remaining as usize);
        let (batch, finished) = collector.collect(&ac, &ppo_cfg, &mut rng)?;
        let m = ppo_update(&mut ac, &batch, &ppo_cfg, &mut rng)?;
        steps += batch.len() as u64;
        episodes += finished.len() as u64;
        let returns: Vec<f64> = finished.iter().map(|e| e.episode_return).collect();
        let succ: Vec<f64> = finished.iter().map(|e| e.success as u8 as f64).collect();
        progress.rows.push(MetricsRow {
            seed,
            step: steps,
            episodes,
            episodic_return: mean(&returns),
            success_rate: mean(&succ),
            policy_loss: Some(m.policy_loss),
            value_loss: Some(m.value_loss),
            ..Default::default()
        });
        if progress.checkpoint(&ac.policy, steps, episodes)? {
            break;
        }
    }
    progress.finish(ac.policy, steps)
}

fn train_sac_her(cfg: &RunConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env_config = cfg.env_config();
    let mut env = Env::new(env_config.clone(), seed)?;
    let sac = &cfg.sac;
    let mut learner = SacLearner::new(env.obs_dim(), ACT_DIM, sac, &mut rng);
    let mut buffer = ReplayBuffer::new(sac.buffer_capacity);
    let mut progress = Progress::new(cfg, seed);
    let (mut steps, mut episodes) = (0u64, 0u64);
    let mut window_returns = Vec::new();
    let mut window_success = Vec::new();
    let mut window_q = Vec::new();
    let mut window_pi = Vec::new();
    let mut next_log = SAC_LOG_EVERY;
    'outer: loop {
        env.reset();
        let mut step_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let mut update_err = None;
        let (traj, summary) = {
            let learner_ref = &mut learner;
            let buffer_ref = &buffer;
            run_episode(&mut env, |obs| {
                let a = if (steps as usize) < sac.learning_starts {
                    vec![step_rng.random_range(-1.0..1.0), step_rng.random_range(-1.0..1.0)]
                } else {
                    learner_ref.policy.sample(obs, &mut step_rng)?.0
                };
                steps += 1;
                if steps as usize >= sac.learning_starts && buffer_ref.len() >= sac.batch_size {
                    let batch = buffer_ref.sample(sac.batch_size, &mut step_rng);
                    match sac_update(learner_ref, &batch, sac, &mut step_rng) {
                        Ok(m) => {
                            window_q.push(m.q_loss);
                            window_pi.push(m.policy_loss);
                        }
                        Err(e) => update_err = Some(e),
                    }
                }
                Ok(a)
            })?
        };
        if let Some(e) = update_err {
            return Err(e.into());
        }
        episodes += 1;
        window_returns.push(summary.episode_return);
        window_success.push(summary.success as u8 as f64);
        buffer.extend(her_relabel(&traj, &cfg.her, &env_config, &mut rng)?);
        if steps >= next_log || steps >= cfg.total_steps {
            progress.rows.push(MetricsRow {
                seed,
                step: steps,
                episodes,
                episodic_return: mean(&window_returns),
                success_rate: mean(&window_success),
                policy_loss: mean(&window_pi),
                q_loss: mean(&window_q),
                ..Default::default()
            });
            window_returns.clear();
            window_success.clear();
            window_q.clear();
            window_pi.clear();
            while next_log <= steps {
                next_log += SAC_LOG_EVERY;
            }
        }
        if progress.checkpoint(&learner.policy, steps.min(cfg.total_steps), episodes)? {
            break 'outer;
        }
    }
    progress.finish(learner.policy, steps)
}

/// Loads the run's offline transitions, checking they fit the task.
fn load_offline(cfg: &RunConfig) -> Result<Vec<Transition>, HarnessError> {
    let dir = cfg
        .dataset_dir
        .as_ref()
        .ok_or(HarnessError::MissingDataset(cfg.algorithm.label()))?;
    let data = read_dataset(dir, Some(cfg.task_id))?;
    let transitions: Vec<Transition> = data.transitions().cloned().collect();
    if transitions.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let obs_dim = cfg.task.obs_dim();
    if let Some(t) = transitions.iter().find(|t| t.obs.len() != obs_dim) {
        return Err(HarnessError::LayoutMismatch {
            task: cfg.task_id.to_string(),
            policy: t.obs.len(),
            task_dims: obs_dim,
        });
    }
    Ok(transitions)
}

fn train_bc(cfg: &RunConfig, seed: u64, data: &[Transition]) -> Result<SeedRun, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = cfg.task.obs_dim();
    let net = Mlp::new(&hidden_dims(obs_dim, &cfg.bc.hidden, ACT_DIM), 0.01, &mut rng);
    let mut policy = GaussianPolicy::with_fixed_std(net, cfg.iql.init_log_std);
    let mut opt = AdamState::new(policy.mean_net.num_params(), AdamConfig::with_lr(cfg.bc.lr));
    let mut progress = Progress::new(cfg, seed);
    let mut losses = Vec::new();
    let mut step = 0;
    loop {
        step += 1;
        let picks: Vec<&Transition> = (0..cfg.bc.batch_size).map(|_| data.choose(&mut rng).expect("non-empty")).collect();
        let obs: Vec<Vec<f64>> = picks.iter().map(|t| t.obs.clone()).collect();
        let acts: Vec<Vec<f64>> = picks.iter().map(|t| t.action.clone()).collect();
        losses.push(bc_update(&mut policy, &mut opt, &obs, &acts)?);
        if step % OFFLINE_LOG_EVERY == 0 || step >= cfg.total_steps {
            progress.rows.push(MetricsRow {
                seed,
                step,
                policy_loss: mean(&losses),
                ..Default::default()
            });
            losses.clear();
        }
        if progress.checkpoint(&policy, step, 0)? {
            break;
        }
    }
    progress.finish(policy, step)
}

fn train_iql(cfg: &RunConfig, seed: u64, data: &[Transition]) -> Result<SeedRun, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = IqlLearner::new(cfg.task.obs_dim(), ACT_DIM, &cfg.iql, &mut rng);
    let mut progress = Progress::new(cfg, seed);
    let mut window = Vec::new();
    let mut step = 0;
    loop {
        step += 1;
        let batch: Vec<Transition> = (0..cfg.iql.batch_size)
            .map(|_| data.choose(&mut rng).expect("non-empty").clone())
            .collect();
        window.push(iql_update(&mut learner, &batch, &cfg.iql)?);
        if step % OFFLINE_LOG_EVERY == 0 || step >= cfg.total_steps {
            let avg = |f: fn(&crate::learn::IqlMetrics) -> f64| mean(&window.iter().map(f).collect::<Vec<_>>());
            progress.rows.push(MetricsRow {
                seed,
                step,
                policy_loss: avg(|m| m.policy_loss),
                value_loss: avg(|m| m.value_loss),
                q_loss: avg(|m| m.q_loss),
                ..Default::default()
            });
            window.clear();
        }
        if progress.checkpoint(&learner.policy, step, 0)? {
            break;
        }
    }
    progress.finish(learner.policy, step)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let header = [
        "seed",
        "step",
        "episodes",
        "episodic_return",
        "success_rate",
        "eval_success",
        "eval_return",
        "policy_loss",
        "value_loss",
        "q_loss",
    ];
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.step.to_string(),
            r.episodes.to_string(),
            opt_cell(r.episodic_return),
            opt_cell(r.success_rate),
            opt_cell(r.eval_success),
            opt_cell(r.eval_return),
            opt_cell(r.policy_loss),
            opt_cell(r.value_loss),
            opt_cell(r.q_loss),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_curve(path: &Path, curves: &[(u64, Vec<(u64, f64)>)]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["seed", "step", "eval_return", "normalized_return"])
        .map_err(|e| io_err(path, e))?;
    for (seed, points) in curves {
        let returns: Vec<f64> = points.iter().map(|p| p.1).collect();
        for ((step, ret), norm) in points.iter().zip(normalize_curve(&returns)) {
            w.write_record([seed.to_string(), step.to_string(), ret.to_string(), norm.to_string()])
                .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Trains every seed in `cfg.seeds` and writes policies, `metrics.csv`,
/// `curve.csv`, `run_config.json`, `train_report.json` and
/// `eval_report.json` under `cfg.output_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainArtifacts, HarnessError> {
    cfg.validate()?;
    let offline = if cfg.algorithm.offline() {
        Some(load_offline(cfg)?)
    } else {
        None
    };
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let config_path = out.join("run_config.json");
    fs::write(&config_path, cfg.to_canonical_json() + "\n").map_err(|e| io_err(&config_path, e))?;

    let env_config = cfg.env_config();
    let layout = cfg.task.obs_layout();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut outcomes = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let run = match (cfg.algorithm, offline.as_deref()) {
            (Algorithm::Ppo, _) => train_ppo(cfg, seed)?,
            (Algorithm::SacHer, _) => train_sac_her(cfg, seed)?,
            (Algorithm::Bc, Some(data)) => train_bc(cfg, seed, data)?,
            (Algorithm::Iql, Some(data)) => train_iql(cfg, seed, data)?,
            (_, None) => unreachable!("offline data loaded above"),
        };
        let meta = serde_json::json!({
            "task_id": cfg.task_id,
            "algorithm": cfg.algorithm,
            "seed": seed,
            "steps": run.steps,
            "env_config": env_config,
        });
        let policy_file = out.join(format!("policy_seed{seed}.json"));
        PolicyFile::from_policy(&run.policy, layout.clone(), meta).save(&policy_file)?;
        outcomes.push(SeedOutcome {
            seed,
            steps: run.steps,
            final_eval_success: run.last_eval.success_rate,
            final_eval_return: run.last_eval.mean_return,
            reached_target: run.reached_target,
            policy_file,
        });
        per_seed.push(run.last_eval);
        rows.extend(run.rows);
        curves.push((seed, run.curve));
    }
    let metrics_csv = out.join("metrics.csv");
    write_metrics(&metrics_csv, &rows)?;
    let curve_csv = out.join("curve.csv");
    write_curve(&curve_csv, &curves)?;

    let report = EvalReport {
        task_id: cfg.task_id,
        algorithm: Some(cfg.algorithm),
        mean: per_seed.iter().map(|s| s.success_rate).sum::<f64>() / per_seed.len() as f64,
        episodes_per_seed: cfg.n_eval_episodes,
        episodes: cfg.n_eval_episodes * per_seed.len(),
        per_seed,
        action_selection: "greedy mean".into(),
        policy: None,
    };
    let eval_report = out.join("eval_report.json");
    write_json(&eval_report, &report)?;
    let artifacts = TrainArtifacts {
        output_dir: out.clone(),
        config_path,
        metrics_csv,
        curve_csv,
        eval_report,
        seeds: outcomes,
    };
    write_json(&out.join("train_report.json"), &artifacts)?;
    Ok(artifacts)
}
