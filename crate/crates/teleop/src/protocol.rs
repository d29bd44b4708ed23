use airhockey_core::env::{Action, GoalSample, TaskId};
use airhockey_core::physics::{BodyState, PhysicsParams, Vec2};
use serde::{Deserialize, Serialize};

/// Position and velocity of one body, in meters and m/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodySummary {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub radius: f64,
}

impl From<&BodyState> for BodySummary {
    fn from(b: &BodyState) -> Self {
        Self {
            position: [b.position.x, b.position.y],
            velocity: [b.velocity.x, b.velocity.y],
            radius: b.radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub half_width: f64,
    pub half_length: f64,
    pub paddle_region_y_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBroadcast {
    pub tick: u64,
    pub episode_id: u64,
    pub episode_step: u64,
    pub task_id: TaskId,
    pub paddle: BodySummary,
    pub puck: BodySummary,
    pub objects: Vec<BodySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalSample>,
    pub table: TableSummary,
    pub reward: f64,
    pub episode_return: f64,
    pub success: bool,
    pub recording: bool,
    /// Whether the receiving client holds control.
    pub controller: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Control {
    Reset,
    SetTask { task_id: TaskId },
    StartRecord,
    StopRecord,
    SetSeed { seed: u64 },
}

/// Wire messages, JSON text frames tagged by `type`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum TeleopMessage {
    StateBroadcast(StateBroadcast),
    TargetCommand { x: f64, y: f64 },
    ControlCommand(Control),
    Ack { ok: bool, detail: String },
}

impl TeleopMessage {
    pub fn ack(ok: bool, detail: impl Into<String>) -> Self {
        TeleopMessage::Ack {
            ok,
            detail: detail.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }
}

/// Converts a pointer target in normalized table coordinates into the action
/// that moves the paddle toward it this step.
///
/// The target is clamped to [-1, 1]^2, scaled to meters, clamped to the
/// paddle region, and the displacement from the paddle is divided by the
/// per-step displacement limit and clamped to [-1, 1]^2. `None` for
/// non-finite input.
pub fn map_target(raw: [f64; 2], paddle: &BodyState, physics: &PhysicsParams) -> Option<Action> {
    if !raw.iter().all(|v| v.is_finite()) {
        return None;
    }
    let t = &physics.table;
    let target = Vec2::new(raw[0].clamp(-1.0, 1.0) * t.half_width, raw[1].clamp(-1.0, 1.0) * t.half_length);
    let target = t.clamp_paddle(target, paddle.radius);
    let d = (target - paddle.position) / physics.max_step_displacement();
    Some([d.x.clamp(-1.0, 1.0), d.y.clamp(-1.0, 1.0)])
}
