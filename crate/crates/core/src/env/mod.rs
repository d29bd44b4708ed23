//! The ten air hockey tasks behind a single reset/step interface.

mod reward;
mod task;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::physics::{
    step_world, PhysicsError, PhysicsParams, StepEvents, TableBounds, Vec2, WorldState,
    BLOCK_RADIUS,
};

pub use reward::{
    achieved_goal, goal_reward, task_reward, task_success, EpisodeTracker, GoalOutcome, GoalSample,
};
pub use task::{task_catalog, weights, TaskId, TaskSpec};

/// Paddle home pose at every reset.
pub const PADDLE_HOME: Vec2 = Vec2::new(0.0, -0.7);
/// Velocity normalization scale for observations.
pub const VELOCITY_SCALE: f64 = 2.0;
pub const ACT_DIM: usize = 2;

pub type Action = [f64; ACT_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown task id '{given}'; valid ids: {valid}")]
    UnknownTask { given: String, valid: String },
    #[error("invalid task config: {0}")]
    InvalidConfig(String),
    #[error("episode done; reset required")]
    EpisodeDone,
    #[error("invalid action: components must be finite")]
    InvalidAction,
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// Physics parameters plus task settings; everything that determines the
/// environment's dynamics and rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub physics: PhysicsParams,
    pub task: TaskSpec,
}

impl EnvConfig {
    pub fn default_for(task_id: TaskId) -> Self {
        Self {
            physics: PhysicsParams::default(),
            task: TaskSpec::default_for(task_id),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.physics.validate()?;
        self.task.validate()
    }

    /// SHA-256 over the canonical JSON of the physics and task settings.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub success: bool,
    pub truncated: bool,
    pub components: BTreeMap<String, f64>,
    pub events: StepEvents,
    pub achieved_goal: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One task environment. Single-owner; create one per worker.
#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    seed: u64,
    world: WorldState,
    goal: Option<GoalSample>,
    tracker: EpisodeTracker,
    prev_action: Action,
    done: bool,
}

/// Builds a task environment. `config` defaults to the task's defaults.
pub fn make_task(task_id: &str, config: Option<EnvConfig>, seed: u64) -> Result<Env, EnvError> {
    let id: TaskId = task_id.parse()?;
    let config = config.unwrap_or_else(|| EnvConfig::default_for(id));
    if config.task.task_id != id {
        return Err(EnvError::InvalidConfig(format!(
            "config is for {} but {} was requested",
            config.task.task_id, id
        )));
    }
    Env::new(config, seed)
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let world = WorldState::new(&config.physics, PADDLE_HOME, Vec2::ZERO, seed);
        let tracker = EpisodeTracker::new(&world);
        Ok(Self {
            config,
            seed,
            world,
            goal: None,
            tracker,
            prev_action: [0.0; ACT_DIM],
            done: true,
        })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.config.task
    }

    pub fn physics(&self) -> &PhysicsParams {
        &self.config.physics
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn goal(&self) -> Option<&GoalSample> {
        self.goal.as_ref()
    }

    pub fn tracker(&self) -> &EpisodeTracker {
        &self.tracker
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn obs_dim(&self) -> usize {
        self.config.task.obs_dim()
    }

    pub fn observation(&self) -> Vec<f64> {
        observe(&self.config.task, &self.config.physics.table, &self.world, self.goal.as_ref())
    }

    pub fn achieved_goal(&self) -> Option<Vec<f64>> {
        achieved_goal(&self.config.task, &self.world)
    }

    /// Starts a new episode, sampling placements and goal from the world's PRNG.
    pub fn reset(&mut self) -> Vec<f64> {
        let spec = &self.config.task;
        let params = &self.config.physics;
        let mut rng = self.world.rng_state.clone();
        let r = &mut rng.0;
        let table = params.table;
        let puck_r = self.world.puck.radius;

        let mut world = WorldState::new(params, PADDLE_HOME, Vec2::ZERO, 0);
        match spec.task_id {
            TaskId::Reach | TaskId::ReachVelocity => {
                // Parked in a top corner, at rest.
                world.puck.position =
                    Vec2::new(table.half_width - puck_r, table.half_length - puck_r);
            }
            TaskId::Touch | TaskId::Juggle | TaskId::PuckVelocity => {
                world.puck.position = Vec2::new(r.random_range(-0.2..0.2), 0.6);
                world.puck.velocity = Vec2::new(r.random_range(-0.2..0.2), r.random_range(-0.8..-0.3));
            }
            TaskId::Strike
            | TaskId::StrikeCrowd
            | TaskId::MoveBlock
            | TaskId::HitGoal
            | TaskId::HitGoalVelocity => {
                // Off the paddle's column so an idle paddle never meets it.
                let side = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                world.puck.position =
                    Vec2::new(side * r.random_range(0.12..0.25), r.random_range(-0.2..0.1));
            }
        }
        match spec.task_id {
            TaskId::MoveBlock => {
                for _ in 0..spec.n_blocks {
                    let p = Vec2::new(r.random_range(-0.15..0.15), r.random_range(0.15..0.4));
                    world.add_block(params, p);
                }
            }
            TaskId::StrikeCrowd => {
                for p in crowd_rack(spec.n_blocks, Vec2::new(0.0, 0.35)) {
                    world.add_block(params, table.clamp_inside(p, BLOCK_RADIUS));
                }
            }
            _ => {}
        }
        let goal = spec.goal_conditioned.then(|| sample_goal(spec, params, r));
        world.rng_state = rng;
        self.reset_to(world, goal)
    }

    /// Starts an episode from an explicit world and goal.
    pub fn reset_to(&mut self, world: WorldState, goal: Option<GoalSample>) -> Vec<f64> {
        self.tracker = EpisodeTracker::new(&world);
        self.world = world;
        self.goal = goal;
        self.prev_action = [0.0; ACT_DIM];
        self.done = false;
        self.observation()
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::InvalidAction);
        }
        let a = action.map(|v| v.clamp(-1.0, 1.0));
        let spec = &self.config.task;
        let params = &self.config.physics;
        let reach = params.max_step_displacement();
        let target = self.world.paddle.position + Vec2::new(a[0], a[1]) * reach;
        let (next, events) = step_world(&self.world, target, params)?;

        let mut components =
            task_reward(spec, self.goal.as_ref(), &self.world, &next, &events, &mut self.tracker);
        let jerk: f64 = a.iter().zip(&self.prev_action).map(|(x, y)| (x - y) * (x - y)).sum();
        components.insert("regularization".to_string(), -spec.reg_lambda * jerk);
        let reward: f64 = components.values().sum();

        self.prev_action = a;
        self.world = next;
        let success = self.tracker.success;
        let ended_by_success = success && spec.task_id.terminates_on_success();
        let out_of_time = self.world.tick >= spec.episode_limit;
        self.done = ended_by_success || out_of_time;

        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
            info: StepInfo {
                success,
                truncated: out_of_time && !ended_by_success,
                components,
                events,
                achieved_goal: self.achieved_goal(),
            },
        })
    }
}

/// Normalized observation vector for `world` under the task's layout.
pub fn observe(
    spec: &TaskSpec,
    table: &TableBounds,
    world: &WorldState,
    goal: Option<&GoalSample>,
) -> Vec<f64> {
    let (hw, hl) = (table.half_width, table.half_length);
    let mut obs = Vec::with_capacity(spec.obs_dim());
    for body in [&world.paddle, &world.puck] {
        obs.push(body.position.x / hw);
        obs.push(body.position.y / hl);
        obs.push(body.velocity.x / VELOCITY_SCALE);
        obs.push(body.velocity.y / VELOCITY_SCALE);
    }
    if spec.goal_conditioned {
        let g = goal.copied().unwrap_or(GoalSample { position: Vec2::ZERO, velocity: Vec2::ZERO });
        obs.push(g.position.x / hw);
        obs.push(g.position.y / hl);
        if spec.task_id.velocity_goal() {
            obs.push(g.velocity.x / VELOCITY_SCALE);
            obs.push(g.velocity.y / VELOCITY_SCALE);
        }
    }
    for i in 0..spec.n_blocks {
        let p = world.objects.get(i).map(|b| b.position).unwrap_or(Vec2::ZERO);
        obs.push(p.x / hw);
        obs.push(p.y / hl);
    }
    obs
}

/// Copy of `obs` with its goal block replaced by `goal` (physical units).
pub fn with_goal(spec: &TaskSpec, table: &TableBounds, obs: &[f64], goal: &[f64]) -> Vec<f64> {
    let mut out = obs.to_vec();
    if spec.goal_conditioned {
        let g = GoalSample::from_slice(goal);
        out[8] = g.position.x / table.half_width;
        out[9] = g.position.y / table.half_length;
        if spec.task_id.velocity_goal() {
            out[10] = g.velocity.x / VELOCITY_SCALE;
            out[11] = g.velocity.y / VELOCITY_SCALE;
        }
    }
    out
}

fn crowd_rack(n: usize, apex: Vec2) -> Vec<Vec2> {
    let spacing = 2.0 * BLOCK_RADIUS + 0.004;
    let row_step = spacing * 3f64.sqrt() / 2.0;
    let mut out = Vec::with_capacity(n);
    let mut row = 0usize;
    while out.len() < n {
        for k in 0..=row {
            if out.len() == n {
                break;
            }
            let x = (k as f64 - row as f64 / 2.0) * spacing;
            out.push(Vec2::new(apex.x + x, apex.y + row as f64 * row_step));
        }
        row += 1;
    }
    out
}

fn sample_goal<R: Rng>(spec: &TaskSpec, params: &PhysicsParams, r: &mut R) -> GoalSample {
    let table = &params.table;
    let position = match spec.task_id {
        TaskId::Reach | TaskId::ReachVelocity => {
            // Goals must be reachable by the paddle.
            let pr = crate::physics::PADDLE_RADIUS;
            Vec2::new(
                r.random_range(-(table.half_width - pr)..(table.half_width - pr)),
                r.random_range((-table.half_length + pr)..table.paddle_region_y_max),
            )
        }
        _ => {
            let inset = spec.goal_radius;
            Vec2::new(
                r.random_range(-(table.half_width - inset)..(table.half_width - inset)),
                r.random_range(inset..(table.half_length - inset)),
            )
        }
    };
    let velocity = if spec.task_id.velocity_goal() {
        let angle = r.random_range(0.0..std::f64::consts::TAU);
        let speed = r.random_range(0.3..1.0) * 2.0 * spec.goal_speed;
        Vec2::new(angle.cos(), angle.sin()) * speed
    } else {
        Vec2::ZERO
    };
    GoalSample { position, velocity }
}
