//! Deterministic disk physics on a tilted, bounded air hockey table.
//!
//! Units are SI throughout. The origin sits at the table center, `+y` points
//! up-table away from the paddle's home, and the slope component of gravity
//! pulls the puck along `-y` back toward the paddle.
//!
//! A control step of `control_dt` seconds is split into `substeps` equal
//! sub-integrations. Each substep moves the kinematic paddle toward its target,
//! integrates the free bodies, and resolves contacts in a fixed order:
//! paddle-puck, paddle-objects, puck-objects, object-object pairs, then walls.

mod collision;
mod vec2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use collision::{paddle_track, resolve_disk_collision, resolve_wall_contact};
pub use vec2::Vec2;

/// Meters per inch.
pub const INCH: f64 = 0.0254;
/// 24 in table width.
pub const TABLE_HALF_WIDTH: f64 = 12.0 * INCH;
/// 66 in table length.
pub const TABLE_HALF_LENGTH: f64 = 33.0 * INCH;
/// 3.75 in paddle diameter.
pub const PADDLE_RADIUS: f64 = 3.75 * INCH / 2.0;
/// 2.5 in puck diameter.
pub const PUCK_RADIUS: f64 = 2.5 * INCH / 2.0;
pub const BLOCK_RADIUS: f64 = 0.03;
/// Time constant of the paddle's first-order target tracking.
pub const PADDLE_TRACKING_TAU: f64 = 0.05;
/// Maximum interpenetration tolerated between bodies after a step.
pub const PENETRATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("both bodies static")]
    BothBodiesStatic,
    #[error("invalid target")]
    InvalidTarget,
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),
    #[error("invalid physics parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Paddle,
    Puck,
    Block,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub mass: f64,
    pub kind: BodyKind,
}

impl BodyState {
    pub fn new(kind: BodyKind, position: Vec2, radius: f64, mass: f64) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            radius,
            mass,
            kind,
        }
    }

    /// The paddle is kinematic and never receives impulses.
    pub fn inverse_mass(&self) -> f64 {
        match self.kind {
            BodyKind::Paddle => 0.0,
            BodyKind::Puck | BodyKind::Block => 1.0 / self.mass,
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.velocity.norm_squared()
    }

    fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableBounds {
    pub half_width: f64,
    pub half_length: f64,
    /// Highest y the paddle center may reach.
    pub paddle_region_y_max: f64,
}

impl Default for TableBounds {
    fn default() -> Self {
        Self {
            half_width: TABLE_HALF_WIDTH,
            half_length: TABLE_HALF_LENGTH,
            // lowest 0.4 m of the table
            paddle_region_y_max: -TABLE_HALF_LENGTH + 0.4,
        }
    }
}

impl TableBounds {
    /// Clamps a disk center so the disk lies inside the table.
    pub fn clamp_inside(&self, p: Vec2, radius: f64) -> Vec2 {
        let xm = self.half_width - radius;
        let ym = self.half_length - radius;
        Vec2::new(p.x.clamp(-xm, xm), p.y.clamp(-ym, ym))
    }

    /// Clamps a paddle center to the paddle region.
    pub fn clamp_paddle(&self, p: Vec2, radius: f64) -> Vec2 {
        let xm = self.half_width - radius;
        let ylo = -self.half_length + radius;
        let yhi = self.paddle_region_y_max.min(self.half_length - radius);
        Vec2::new(p.x.clamp(-xm, xm), p.y.clamp(ylo, yhi))
    }

    pub fn contains(&self, p: Vec2, radius: f64, tol: f64) -> bool {
        p.x.abs() <= self.half_width - radius + tol && p.y.abs() <= self.half_length - radius + tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDamping {
    pub puck: f64,
    pub block: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub puck_mass: f64,
    pub paddle_mass: f64,
    pub object_mass: f64,
    pub restitution_paddle_puck: f64,
    pub restitution_wall: f64,
    pub restitution_puck_object: f64,
    pub linear_damping: LinearDamping,
    pub tilt_deg: f64,
    pub gravity: f64,
    pub paddle_max_speed: f64,
    pub control_dt: f64,
    pub substeps: u32,
    pub tangential_friction: f64,
    pub table: TableBounds,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            puck_mass: 0.025,
            paddle_mass: 0.16,
            object_mass: 0.05,
            restitution_paddle_puck: 0.9,
            restitution_wall: 0.85,
            restitution_puck_object: 0.6,
            linear_damping: LinearDamping {
                puck: 0.12,
                block: 2.0,
            },
            tilt_deg: 5.5,
            gravity: 9.81,
            paddle_max_speed: 2.0,
            control_dt: 0.05,
            substeps: 10,
            tangential_friction: 0.0,
            table: TableBounds::default(),
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let bad = |m: &str| Err(PhysicsError::InvalidParams(m.to_string()));
        if !(self.puck_mass > 0.0 && self.paddle_mass > 0.0 && self.object_mass > 0.0) {
            return bad("masses must be positive");
        }
        for (name, e) in [
            ("restitution_paddle_puck", self.restitution_paddle_puck),
            ("restitution_wall", self.restitution_wall),
            ("restitution_puck_object", self.restitution_puck_object),
            ("tangential_friction", self.tangential_friction),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return Err(PhysicsError::InvalidParams(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.control_dt > 0.0) {
            return bad("control_dt must be positive");
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1");
        }
        if !(self.paddle_max_speed > 0.0) {
            return bad("paddle_max_speed must be positive");
        }
        if !(self.linear_damping.puck >= 0.0 && self.linear_damping.block >= 0.0) {
            return bad("damping must be non-negative");
        }
        let t = &self.table;
        if !(t.half_width > 0.0 && t.half_length > 0.0) {
            return bad("table extents must be positive");
        }
        if !(t.paddle_region_y_max >= -t.half_length && t.paddle_region_y_max <= t.half_length) {
            return bad("paddle_region_y_max outside the table");
        }
        Ok(())
    }

    /// Slope component of gravity (positive magnitude, acting along -y).
    pub fn slope_acceleration(&self) -> f64 {
        self.gravity * self.tilt_deg.to_radians().sin()
    }

    /// Largest paddle displacement in one control step.
    pub fn max_step_displacement(&self) -> f64 {
        self.paddle_max_speed * self.control_dt
    }
}

/// Seeded PRNG carried inside the world so snapshots are self-contained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngState(pub ChaCha8Rng);

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        RngState(ChaCha8Rng::seed_from_u64(seed))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub paddle: BodyState,
    pub puck: BodyState,
    pub objects: Vec<BodyState>,
    pub rng_state: RngState,
}

impl WorldState {
    /// Paddle at `paddle_pos`, puck at `puck_pos`, both at rest, no objects.
    pub fn new(params: &PhysicsParams, paddle_pos: Vec2, puck_pos: Vec2, seed: u64) -> Self {
        Self {
            tick: 0,
            paddle: BodyState::new(BodyKind::Paddle, paddle_pos, PADDLE_RADIUS, params.paddle_mass),
            puck: BodyState::new(BodyKind::Puck, puck_pos, PUCK_RADIUS, params.puck_mass),
            objects: Vec::new(),
            rng_state: RngState::from_seed(seed),
        }
    }

    pub fn add_block(&mut self, params: &PhysicsParams, position: Vec2) {
        self.objects
            .push(BodyState::new(BodyKind::Block, position, BLOCK_RADIUS, params.object_mass));
    }

    pub fn bodies(&self) -> impl Iterator<Item = &BodyState> {
        std::iter::once(&self.paddle)
            .chain(std::iter::once(&self.puck))
            .chain(self.objects.iter())
    }

    pub fn total_kinetic_energy(&self) -> f64 {
        self.puck.kinetic_energy() + self.objects.iter().map(|b| b.kinetic_energy()).sum::<f64>()
    }

    /// Deepest overlap between any two bodies (0 when none overlap).
    pub fn max_penetration(&self) -> f64 {
        let bodies: Vec<&BodyState> = self.bodies().collect();
        let mut worst = 0.0f64;
        for i in 0..bodies.len() {
            for j in i + 1..bodies.len() {
                let d = bodies[i].position.distance(bodies[j].position);
                worst = worst.max(bodies[i].radius + bodies[j].radius - d);
            }
        }
        worst
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("world state serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub position: Vec2,
    pub relative_speed: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    pub paddle_puck_contacts: u32,
    pub puck_object_contacts: Vec<usize>,
    pub wall_contacts: u32,
    pub contact_points: Vec<ContactPoint>,
}

/// Advances the world by one control step toward `paddle_target`.
pub fn step_world(
    world: &WorldState,
    paddle_target: Vec2,
    params: &PhysicsParams,
) -> Result<(WorldState, StepEvents), PhysicsError> {
    if !paddle_target.is_finite() {
        return Err(PhysicsError::InvalidTarget);
    }
    check_finite(world)?;
    let mut next = world.clone();
    let mut events = StepEvents::default();
    let h = params.control_dt / params.substeps as f64;
    let gravity = Vec2::new(0.0, -params.slope_acceleration());
    let table = &params.table;
    let mu = params.tangential_friction;

    for _ in 0..params.substeps {
        next.paddle = paddle_track(&next.paddle, paddle_target, params, h)?;

        integrate_free(&mut next.puck, gravity, params.linear_damping.puck, h);
        // Blocks rest on the table surface: friction holds them against the slope.
        for obj in next.objects.iter_mut() {
            integrate_free(obj, Vec2::ZERO, params.linear_damping.block, h);
        }

        if let Some(c) = collision::collide(
            &mut next.paddle,
            &mut next.puck,
            params.restitution_paddle_puck,
            mu,
        )? {
            events.paddle_puck_contacts += 1;
            events.contact_points.push(c);
        }
        for obj in next.objects.iter_mut() {
            if let Some(c) =
                collision::collide(&mut next.paddle, obj, params.restitution_puck_object, mu)?
            {
                events.contact_points.push(c);
            }
        }
        for (i, obj) in next.objects.iter_mut().enumerate() {
            if let Some(c) =
                collision::collide(&mut next.puck, obj, params.restitution_puck_object, mu)?
            {
                events.puck_object_contacts.push(i);
                events.contact_points.push(c);
            }
        }
        let n = next.objects.len();
        for i in 0..n {
            for j in i + 1..n {
                let (lo, hi) = next.objects.split_at_mut(j);
                if let Some(c) =
                    collision::collide(&mut lo[i], &mut hi[0], params.restitution_puck_object, mu)?
                {
                    events.contact_points.push(c);
                }
            }
        }

        let before = next.puck.velocity;
        next.puck = resolve_wall_contact(&next.puck, table, params.restitution_wall, mu);
        if next.puck.velocity != before {
            events.wall_contacts += 1;
        }
        for obj in next.objects.iter_mut() {
            let before = obj.velocity;
            *obj = resolve_wall_contact(obj, table, params.restitution_wall, mu);
            if obj.velocity != before {
                events.wall_contacts += 1;
            }
        }

        collision::settle_positions(&mut next, table);
    }

    next.tick += 1;
    check_finite(&next)?;
    Ok((next, events))
}

/// Exact solution of `dv/dt = a - k v` over one substep.
fn integrate_free(body: &mut BodyState, accel: Vec2, damping: f64, h: f64) {
    if damping == 0.0 {
        body.position += body.velocity * h + accel * (0.5 * h * h);
        body.velocity += accel * h;
    } else {
        let decay = (-damping * h).exp();
        let terminal = accel / damping;
        let shift = (body.velocity - terminal) * ((1.0 - decay) / damping);
        body.position += terminal * h + shift;
        body.velocity = terminal + (body.velocity - terminal) * decay;
    }
}

fn check_finite(world: &WorldState) -> Result<(), PhysicsError> {
    if !world.paddle.is_finite() {
        return Err(PhysicsError::NumericalDivergence("paddle".into()));
    }
    if !world.puck.is_finite() {
        return Err(PhysicsError::NumericalDivergence("puck".into()));
    }
    for (i, obj) in world.objects.iter().enumerate() {
        if !obj.is_finite() {
            return Err(PhysicsError::NumericalDivergence(format!("object {i}")));
        }
    }
    Ok(())
}
