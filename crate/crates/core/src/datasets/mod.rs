//! Trajectory files (JSON lines), dataset directories and replay checks.
//!
//! Line 1 is the header, line 2 the initial world state, then one
//! [`Transition`] per line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Env, EnvConfig, EnvError, GoalSample, TaskId, ACT_DIM};
use crate::learn::{Trajectory, Transition};
use crate::physics::WorldState;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("file {file} line {line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("unknown config_hash {0}")]
    UnknownConfig(String),
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] crate::learn::LearnError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    TeleopMouse,
    Policy,
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format_version: u32,
    pub task_id: TaskId,
    pub config_hash: String,
    pub seed: u64,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<String>,
    /// Full settings, so replay does not depend on defaults of the build.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<EnvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalSample>,
}

impl TrajectoryHeader {
    pub fn for_env(env: &Env, source: Source) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            task_id: env.spec().task_id,
            config_hash: env.config().config_hash(),
            seed: env.seed(),
            obs_dim: env.obs_dim(),
            act_dim: ACT_DIM,
            source,
            participant_id: None,
            config: Some(env.config().clone()),
            goal: env.goal().copied(),
        }
    }

    /// The settings this file was recorded under.
    pub fn resolve_config(&self) -> Result<EnvConfig, DatasetError> {
        let cfg = match &self.config {
            Some(c) => c.clone(),
            None => EnvConfig::default_for(self.task_id),
        };
        if cfg.config_hash() != self.config_hash {
            return Err(DatasetError::UnknownConfig(self.config_hash.clone()));
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryFile {
    pub header: TrajectoryHeader,
    pub initial_world: WorldState,
    pub steps: Vec<Transition>,
}

impl TrajectoryFile {
    /// Steps as a learner trajectory; goal tasks get the achieved goal at
    /// reset derived from the initial world.
    pub fn to_trajectory(&self) -> Trajectory {
        let spec = self.header.config.as_ref().map(|c| c.task.clone()).unwrap_or_else(|| {
            crate::env::TaskSpec::default_for(self.header.task_id)
        });
        Trajectory {
            initial_achieved_goal: crate::env::achieved_goal(&spec, &self.initial_world).unwrap_or_default(),
            transitions: self.steps.clone(),
        }
    }
}

/// Resets `env`, runs one episode with `act` and packages it as a file.
pub fn record_episode<F>(env: &mut Env, source: Source, act: F) -> Result<TrajectoryFile, DatasetError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, crate::learn::LearnError>,
{
    env.reset();
    let header = TrajectoryHeader::for_env(env, source);
    let initial_world = env.world().clone();
    let (traj, _) = crate::learn::run_episode(env, act)?;
    Ok(TrajectoryFile {
        header,
        initial_world,
        steps: traj.transitions,
    })
}

impl TrajectoryFile {
    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        write_trajectory(path, &self.header, &self.initial_world, &self.steps)
    }
}

fn validate(header: &TrajectoryHeader, steps: &[Transition]) -> Result<(), DatasetError> {
    for (i, s) in steps.iter().enumerate() {
        if s.obs.len() != header.obs_dim || s.next_obs.len() != header.obs_dim || s.action.len() != header.act_dim {
            return Err(DatasetError::Dimension(format!(
                "step {i}: obs {}, next_obs {}, action {} vs header obs_dim {}, act_dim {}",
                s.obs.len(),
                s.next_obs.len(),
                s.action.len(),
                header.obs_dim,
                header.act_dim
            )));
        }
        let finite = s.reward.is_finite() && s.obs.iter().chain(&s.next_obs).chain(&s.action).all(|v| v.is_finite());
        if !finite {
            return Err(DatasetError::Invalid(format!("step {i} has non-finite values")));
        }
        if s.done && i + 1 != steps.len() {
            return Err(DatasetError::Invalid(format!("step {i} is done but not last")));
        }
    }
    if let Some(last) = steps.last() {
        if !last.done && !last.truncated {
            return Err(DatasetError::Invalid("last step neither done nor truncated".into()));
        }
    }
    Ok(())
}

/// Writes a trajectory atomically (temporary file, then rename). Nothing is
/// written if the steps do not match the header.
pub fn write_trajectory(
    path: &Path,
    header: &TrajectoryHeader,
    initial_world: &WorldState,
    steps: &[Transition],
) -> Result<(), DatasetError> {
    validate(header, steps)?;
    let mut text = String::new();
    push_line(&mut text, header);
    push_line(&mut text, initial_world);
    for s in steps {
        push_line(&mut text, s);
    }
    let name = path.file_name().ok_or_else(|| io_err(path, "not a file path"))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(text.as_bytes()).and_then(|_| f.sync_all()).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn push_line<T: Serialize>(text: &mut String, v: &T) {
    text.push_str(&serde_json::to_string(v).expect("record serializes"));
    text.push('\n');
}

/// Parses one trajectory file. Errors name the file and 1-based line.
pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile, DatasetError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let name = path.display().to_string();
    let perr = |line: usize, msg: String| DatasetError::Parse {
        file: name.clone(),
        line,
        msg,
    };
    let mut header = None;
    let mut world = None;
    let mut steps = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| perr(n, e.to_string()))?;
        match n {
            1 => {
                let h: TrajectoryHeader = serde_json::from_str(&line).map_err(|e| perr(n, e.to_string()))?;
                header = Some(h);
            }
            2 => world = Some(serde_json::from_str::<WorldState>(&line).map_err(|e| perr(n, e.to_string()))?),
            _ => steps.push(serde_json::from_str::<Transition>(&line).map_err(|e| perr(n, e.to_string()))?),
        }
    }
    let header = header.ok_or_else(|| perr(1, "missing header".into()))?;
    let initial_world = world.ok_or_else(|| perr(2, "missing initial world".into()))?;
    Ok(TrajectoryFile {
        header,
        initial_world,
        steps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileSummary {
    pub file: String,
    pub task_id: TaskId,
    pub episode_length: usize,
    pub success: bool,
    pub source: Source,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub directory: PathBuf,
    pub files: Vec<FileSummary>,
    pub total_episodes: usize,
    pub total_transitions: usize,
    /// Files skipped because of the task filter.
    pub filtered_out: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub index: DatasetIndex,
    pub episodes: Vec<TrajectoryFile>,
    /// One entry per file rejected for an incompatible format version.
    pub warnings: Vec<String>,
}

impl Dataset {
    /// All transitions in (filename, step) order.
    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| e.steps.iter())
    }
}

/// Loads every `*.jsonl` file under `dir` in lexicographic order, optionally
/// keeping only one task.
pub fn read_dataset(dir: &Path, task: Option<TaskId>) -> Result<Dataset, DatasetError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut episodes = Vec::new();
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let mut filtered_out = 0;
    for p in paths {
        let tf = read_trajectory(&p)?;
        if tf.header.format_version != FORMAT_VERSION {
            let msg = format!(
                "{}: format_version {} unsupported (expected {FORMAT_VERSION})",
                p.display(),
                tf.header.format_version
            );
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        if task.is_some_and(|t| t != tf.header.task_id) {
            filtered_out += 1;
            continue;
        }
        files.push(FileSummary {
            file: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            task_id: tf.header.task_id,
            episode_length: tf.steps.len(),
            success: tf.steps.last().is_some_and(|s| s.success),
            source: tf.header.source,
        });
        episodes.push(tf);
    }
    let total_transitions = files.iter().map(|f| f.episode_length).sum();
    Ok(Dataset {
        index: DatasetIndex {
            directory: dir.to_path_buf(),
            total_episodes: files.len(),
            total_transitions,
            files,
            filtered_out,
        },
        episodes,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub pass: bool,
    pub steps: usize,
    pub max_obs_deviation: f64,
    pub max_reward_deviation: f64,
    pub first_divergent_step: Option<usize>,
}

impl std::fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} steps={} max_obs_dev={:e} max_reward_dev={:e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.steps,
            self.max_obs_deviation,
            self.max_reward_deviation
        )?;
        if let Some(s) = self.first_divergent_step {
            write!(f, " first_divergent_step={s}")?;
        }
        Ok(())
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> (f64, bool) {
    if a.len() != b.len() {
        return (f64::INFINITY, false);
    }
    let exact = a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    (a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max), exact)
}

/// Re-simulates a parsed trajectory from its initial world with its stored
/// actions. PASS iff observations, rewards and flags match bit for bit.
pub fn verify_trajectory(tf: &TrajectoryFile) -> Result<ReplayReport, DatasetError> {
    let config = tf.header.resolve_config()?;
    let mut env = Env::new(config, tf.header.seed)?;
    let mut obs = env.reset_to(tf.initial_world.clone(), tf.header.goal);
    let mut report = ReplayReport {
        pass: true,
        steps: tf.steps.len(),
        max_obs_deviation: 0.0,
        max_reward_deviation: 0.0,
        first_divergent_step: None,
    };
    let diverge = |report: &mut ReplayReport, i: usize| {
        report.pass = false;
        report.first_divergent_step.get_or_insert(i);
    };
    for (i, s) in tf.steps.iter().enumerate() {
        let (d0, ok0) = max_dev(&obs, &s.obs);
        report.max_obs_deviation = report.max_obs_deviation.max(d0);
        if !ok0 {
            diverge(&mut report, i);
        }
        if env.is_done() {
            diverge(&mut report, i);
            break;
        }
        let r = env.step([s.action[0], s.action[1]])?;
        let (d1, ok1) = max_dev(&r.observation, &s.next_obs);
        report.max_obs_deviation = report.max_obs_deviation.max(d1);
        let dr = (r.reward - s.reward).abs();
        report.max_reward_deviation = report.max_reward_deviation.max(if dr.is_nan() { f64::INFINITY } else { dr });
        let flags = r.done == s.done && r.info.success == s.success;
        if !ok1 || r.reward.to_bits() != s.reward.to_bits() || !flags {
            diverge(&mut report, i);
        }
        obs = r.observation;
    }
    Ok(report)
}

pub fn verify_replay(path: &Path) -> Result<ReplayReport, DatasetError> {
    verify_trajectory(&read_trajectory(path)?)
}
