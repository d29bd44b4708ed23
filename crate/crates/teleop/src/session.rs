use std::path::{Path, PathBuf};

use airhockey_core::datasets::{write_trajectory, Source, TrajectoryHeader};
use airhockey_core::env::{Env, EnvConfig, TaskId};
use airhockey_core::learn::Transition;
use airhockey_core::physics::WorldState;

use crate::protocol::{map_target, BodySummary, Control, StateBroadcast, TableSummary};
use crate::TeleopError;

struct Recording {
    header: TrajectoryHeader,
    initial_world: WorldState,
    steps: Vec<Transition>,
}

/// The simulation owned by the serving loop: current environment, latest
/// pointer target, and the open recording if any.
pub struct Session {
    env: Env,
    seed: u64,
    participant_id: Option<String>,
    output_dir: PathBuf,
    target: Option<[f64; 2]>,
    recording: Option<Recording>,
    episode_id: u64,
    episode_return: f64,
    last_reward: f64,
    last_success: bool,
    obs: Vec<f64>,
    files_written: u64,
}

impl Session {
    pub fn new(config: EnvConfig, seed: u64, participant_id: Option<String>, output_dir: &Path) -> Result<Self, TeleopError> {
        let mut env = Env::new(config, seed)?;
        let obs = env.reset();
        Ok(Self {
            env,
            seed,
            participant_id,
            output_dir: output_dir.to_path_buf(),
            target: None,
            recording: None,
            episode_id: 0,
            episode_return: 0.0,
            last_reward: 0.0,
            last_success: false,
            obs,
            files_written: 0,
        })
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    /// Latest-wins pointer target; `false` if non-finite.
    pub fn set_target(&mut self, x: f64, y: f64) -> bool {
        if !(x.is_finite() && y.is_finite()) {
            return false;
        }
        self.target = Some([x, y]);
        true
    }

    fn start_episode(&mut self) {
        self.obs = self.env.reset();
        self.episode_id += 1;
        self.episode_return = 0.0;
        self.last_reward = 0.0;
        self.last_success = false;
        // a fresh episode starts with the pointer released
        self.target = None;
        if self.recording.is_some() {
            self.open_recording();
        }
    }

    fn open_recording(&mut self) {
        let mut header = TrajectoryHeader::for_env(&self.env, Source::TeleopMouse);
        header.participant_id = self.participant_id.clone();
        self.recording = Some(Recording {
            header,
            initial_world: self.env.world().clone(),
            steps: Vec::new(),
        });
    }

    /// Writes the open recording if it has steps. The last step is marked
    /// truncated when the episode did not end on its own.
    fn flush(&mut self) -> Result<Option<PathBuf>, TeleopError> {
        let Some(rec) = self.recording.as_mut() else {
            return Ok(None);
        };
        if rec.steps.is_empty() {
            return Ok(None);
        }
        let mut steps = std::mem::take(&mut rec.steps);
        let last = steps.last_mut().expect("non-empty");
        if !last.done {
            last.truncated = true;
        }
        std::fs::create_dir_all(&self.output_dir).map_err(|e| TeleopError::Io(e.to_string()))?;
        let name = format!(
            "{}_{}_ep{:04}_{:03}.jsonl",
            rec.header.task_id.name(),
            self.participant_id.as_deref().unwrap_or("anon"),
            self.episode_id,
            self.files_written
        );
        let path = self.output_dir.join(name);
        write_trajectory(&path, &rec.header, &rec.initial_world, &steps)?;
        self.files_written += 1;
        Ok(Some(path))
    }

    /// Applies a session command between steps. Returns a flushed file path
    /// when the command closed a recording.
    pub fn apply(&mut self, control: &Control) -> Result<Option<PathBuf>, TeleopError> {
        match control {
            Control::Reset => {
                let flushed = self.flush()?;
                self.start_episode();
                Ok(flushed)
            }
            Control::StartRecord => {
                let flushed = self.flush()?;
                // recordings always begin at an episode start so they replay
                self.open_recording();
                self.start_episode();
                Ok(flushed)
            }
            Control::StopRecord => {
                let flushed = self.flush()?;
                self.recording = None;
                Ok(flushed)
            }
            Control::SetTask { task_id } => self.switch(Some(*task_id), None),
            Control::SetSeed { seed } => self.switch(None, Some(*seed)),
        }
    }

    fn switch(&mut self, task: Option<TaskId>, seed: Option<u64>) -> Result<Option<PathBuf>, TeleopError> {
        let flushed = self.flush()?;
        let mut config = self.env.config().clone();
        if let Some(t) = task {
            if t != config.task.task_id {
                config = EnvConfig {
                    physics: config.physics,
                    task: airhockey_core::env::TaskSpec::default_for(t),
                };
            }
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        self.env = Env::new(config, self.seed)?;
        self.episode_id = self.episode_id.wrapping_sub(1);
        self.start_episode();
        Ok(flushed)
    }

    /// One control step under the held target (no target: zero action).
    /// A finished episode is flushed if recording, then reset.
    pub fn tick(&mut self) -> Result<Option<PathBuf>, TeleopError> {
        let action = match self.target {
            Some(raw) => map_target(raw, &self.env.world().paddle, self.env.physics()).unwrap_or([0.0, 0.0]),
            None => [0.0, 0.0],
        };
        let desired = self.env.goal().map(|g| g.to_vec(self.env.spec()));
        let step = self.env.step(action)?;
        self.episode_return += step.reward;
        self.last_reward = step.reward;
        self.last_success = step.info.success;
        if let Some(rec) = self.recording.as_mut() {
            rec.steps.push(Transition {
                obs: std::mem::take(&mut self.obs),
                action: action.to_vec(),
                reward: step.reward,
                next_obs: step.observation.clone(),
                done: step.done,
                truncated: step.info.truncated,
                success: step.info.success,
                achieved_goal: step.info.achieved_goal.clone(),
                desired_goal: desired,
            });
        }
        self.obs = step.observation;
        if step.done {
            let flushed = self.flush()?;
            self.start_episode();
            return Ok(flushed);
        }
        Ok(None)
    }

    pub fn broadcast(&self, controller: bool) -> StateBroadcast {
        let w = self.env.world();
        let t = &self.env.physics().table;
        StateBroadcast {
            tick: w.tick,
            episode_id: self.episode_id,
            episode_step: self.env.tracker().steps,
            task_id: self.env.spec().task_id,
            paddle: BodySummary::from(&w.paddle),
            puck: BodySummary::from(&w.puck),
            objects: w.objects.iter().map(BodySummary::from).collect(),
            goal: self.env.goal().copied(),
            table: TableSummary {
                half_width: t.half_width,
                half_length: t.half_length,
                paddle_region_y_max: t.paddle_region_y_max,
            },
            reward: self.last_reward,
            episode_return: self.episode_return,
            success: self.last_success,
            recording: self.recording.is_some(),
            controller,
        }
    }
}
