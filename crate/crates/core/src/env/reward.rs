use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::task::{weights, TaskId, TaskSpec};
use crate::physics::{StepEvents, Vec2, WorldState};

/// Steps after a paddle contact during which Strike and PuckVelocity still
/// credit the hit.
const CONTACT_WINDOW: u64 = 2;
/// Touch contacts closer together than this count once unless the paddle
/// and puck separated in between.
const TOUCH_DEBOUNCE_STEPS: u64 = 10;
/// Gap between paddle and puck edges that counts as separation.
const SEPARATION_GAP: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSample {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl GoalSample {
    /// Goal in physical units, sized for the task (2 or 4 entries).
    pub fn to_vec(&self, spec: &TaskSpec) -> Vec<f64> {
        let mut v = vec![self.position.x, self.position.y];
        if spec.task_id.velocity_goal() {
            v.extend([self.velocity.x, self.velocity.y]);
        }
        v
    }

    pub fn from_slice(goal: &[f64]) -> Self {
        let velocity = if goal.len() >= 4 { Vec2::new(goal[2], goal[3]) } else { Vec2::ZERO };
        GoalSample {
            position: Vec2::new(goal[0], goal[1]),
            velocity,
        }
    }
}

/// The quantity a goal-conditioned task tries to steer, in physical units:
/// paddle state for Reach tasks, puck state for HitGoal tasks.
pub fn achieved_goal(spec: &TaskSpec, world: &WorldState) -> Option<Vec<f64>> {
    let body = match spec.task_id {
        TaskId::Reach | TaskId::ReachVelocity => &world.paddle,
        TaskId::HitGoal | TaskId::HitGoalVelocity => &world.puck,
        _ => return None,
    };
    let mut v = vec![body.position.x, body.position.y];
    if spec.task_id.velocity_goal() {
        v.extend([body.velocity.x, body.velocity.y]);
    }
    Some(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalOutcome {
    pub components: Vec<(&'static str, f64)>,
    pub success: bool,
    /// Raw cosine between achieved and desired velocity on goal entry.
    pub cosine: Option<f64>,
}

fn cosine(a: Vec2, b: Vec2) -> f64 {
    let denom = a.norm() * b.norm();
    if denom > 0.0 {
        (a.dot(b) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

/// Goal-dependent part of the reward and the goal success test.
///
/// Depends only on achieved goals before and after the step, which is what
/// hindsight relabeling needs to recompute rewards under a substitute goal.
/// The success bonus is not included.
pub fn goal_reward(spec: &TaskSpec, prev_achieved: &[f64], achieved: &[f64], goal: &[f64]) -> GoalOutcome {
    let g = GoalSample::from_slice(goal);
    let now = GoalSample::from_slice(achieved);
    let before = GoalSample::from_slice(prev_achieved);
    let dist = now.position.distance(g.position);
    match spec.task_id {
        TaskId::Reach => GoalOutcome {
            components: vec![(weights::DISTANCE, -spec.weight(weights::DISTANCE) * dist)],
            success: dist <= spec.eps_position,
            cosine: None,
        },
        TaskId::ReachVelocity => {
            let dv = now.velocity.distance(g.velocity);
            GoalOutcome {
                components: vec![
                    (weights::DISTANCE, -spec.weight(weights::DISTANCE) * dist),
                    (weights::VELOCITY, -spec.weight(weights::VELOCITY) * dv),
                ],
                success: dist <= spec.eps_position && dv <= spec.eps_velocity,
                cosine: None,
            }
        }
        TaskId::HitGoal => GoalOutcome {
            components: vec![],
            success: dist <= spec.goal_radius,
            cosine: None,
        },
        TaskId::HitGoalVelocity => {
            let entered = before.position.distance(g.position) > spec.goal_radius
                && dist <= spec.goal_radius;
            if !entered {
                return GoalOutcome { components: vec![], success: false, cosine: None };
            }
            let cos = cosine(now.velocity, g.velocity);
            let speed_gap = (now.velocity.norm() - g.velocity.norm()).abs();
            GoalOutcome {
                components: vec![
                    (weights::GOAL_DISTANCE, -spec.weight(weights::GOAL_DISTANCE) * dist),
                    (weights::GOAL_COSINE, spec.weight(weights::GOAL_COSINE) * cos),
                    (weights::GOAL_SPEED, -spec.weight(weights::GOAL_SPEED) * speed_gap),
                ],
                success: speed_gap <= spec.eps_velocity && cos >= 0.9,
                cosine: Some(cos),
            }
        }
        _ => GoalOutcome { components: vec![], success: false, cosine: None },
    }
}

fn mean_pairwise_distance(points: &[Vec2]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += points[i].distance(points[j]);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Per-episode bookkeeping behind rewards and success.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTracker {
    pub steps: u64,
    pub success: bool,
    pub touches: u32,
    pub juggle_hits: u32,
    /// Sticky flag for tasks whose success is a one-off condition.
    pub condition_met: bool,
    pub last_contact_step: Option<u64>,
    pub separated_since_contact: bool,
    pub juggle_contact_y: Option<f64>,
    pub initial_blocks: Vec<Vec2>,
    pub initial_spread: f64,
}

impl EpisodeTracker {
    pub fn new(world: &WorldState) -> Self {
        let blocks: Vec<Vec2> = world.objects.iter().map(|b| b.position).collect();
        Self {
            initial_spread: mean_pairwise_distance(&blocks),
            initial_blocks: blocks,
            ..Default::default()
        }
    }

    pub fn spread_gain(&self, world: &WorldState) -> f64 {
        let blocks: Vec<Vec2> = world.objects.iter().map(|b| b.position).collect();
        mean_pairwise_distance(&blocks) - self.initial_spread
    }
}

/// Success predicate over the episode so far.
pub fn task_success(spec: &TaskSpec, episode: &EpisodeTracker) -> bool {
    if episode.steps == 0 {
        return false;
    }
    match spec.task_id {
        TaskId::Touch => episode.touches >= 1,
        TaskId::Juggle => episode.juggle_hits >= spec.juggle_hits_success,
        _ => episode.condition_met,
    }
}

/// Task reward for one control step, excluding action regularization.
///
/// Advances `episode` and returns the named reward components.
pub fn task_reward(
    spec: &TaskSpec,
    goal: Option<&GoalSample>,
    prev_world: &WorldState,
    world: &WorldState,
    events: &StepEvents,
    episode: &mut EpisodeTracker,
) -> BTreeMap<String, f64> {
    let mut comps: BTreeMap<String, f64> = BTreeMap::new();
    let mut add = |name: &str, v: f64| *comps.entry(name.to_string()).or_insert(0.0) += v;

    episode.steps += 1;
    let t = episode.steps;
    let contact = events.paddle_puck_contacts > 0;
    let puck = &world.puck;

    match spec.task_id {
        TaskId::Touch => {
            if contact {
                let fresh = match episode.last_contact_step {
                    None => true,
                    Some(last) => episode.separated_since_contact || t - last >= TOUCH_DEBOUNCE_STEPS,
                };
                if fresh {
                    episode.touches += 1;
                    add(weights::TOUCH, spec.weight(weights::TOUCH));
                }
            }
        }
        TaskId::Strike => {
            if recent_contact(episode, contact, t) && puck.velocity.norm() >= spec.v_min_strike {
                episode.condition_met = true;
            }
        }
        TaskId::PuckVelocity => {
            if recent_contact(episode, contact, t) && puck.velocity.y >= spec.v_min_up {
                episode.condition_met = true;
            }
        }
        TaskId::Juggle => {
            if contact {
                episode.juggle_contact_y = Some(puck.position.y);
            } else if let Some(y0) = episode.juggle_contact_y {
                if puck.position.y >= y0 + spec.juggle_rise {
                    episode.juggle_hits += 1;
                    episode.juggle_contact_y = None;
                    add(weights::JUGGLE, spec.weight(weights::JUGGLE));
                }
            }
        }
        TaskId::MoveBlock => {
            let moved = world
                .objects
                .iter()
                .zip(&episode.initial_blocks)
                .any(|(b, p0)| b.position.distance(*p0) >= spec.block_move_min);
            if moved {
                episode.condition_met = true;
            }
        }
        TaskId::StrikeCrowd => {
            let gain = episode.spread_gain(world);
            add(weights::SPREAD, spec.weight(weights::SPREAD) * gain);
            if gain >= spec.crowd_spread_min {
                episode.condition_met = true;
            }
        }
        TaskId::Reach | TaskId::ReachVelocity | TaskId::HitGoal | TaskId::HitGoalVelocity => {
            if let (Some(g), Some(prev), Some(now)) =
                (goal, achieved_goal(spec, prev_world), achieved_goal(spec, world))
            {
                let out = goal_reward(spec, &prev, &now, &g.to_vec(spec));
                for (name, v) in out.components {
                    add(name, v);
                }
                if out.success {
                    episode.condition_met = true;
                }
            }
        }
    }

    if contact {
        episode.last_contact_step = Some(t);
        episode.separated_since_contact = false;
    }
    let gap = world.paddle.position.distance(puck.position) - world.paddle.radius - puck.radius;
    if gap > SEPARATION_GAP {
        episode.separated_since_contact = true;
    }

    if !matches!(spec.task_id, TaskId::Reach | TaskId::ReachVelocity) {
        let d = world.paddle.position.distance(puck.position);
        add(weights::PUCK_DISTANCE, -spec.weight(weights::PUCK_DISTANCE) * d);
    }

    let now_success = task_success(spec, episode);
    let bonus_task = !matches!(spec.task_id, TaskId::Touch | TaskId::Juggle);
    if now_success && !episode.success && bonus_task {
        add(weights::SUCCESS, spec.weight(weights::SUCCESS));
    }
    episode.success |= now_success;
    comps
}

fn recent_contact(episode: &EpisodeTracker, contact: bool, t: u64) -> bool {
    contact || episode.last_contact_step.is_some_and(|last| t - last <= CONTACT_WINDOW)
}
