use super::{BodyState, ContactPoint, PhysicsError, PhysicsParams, TableBounds, Vec2, WorldState};
use super::PADDLE_TRACKING_TAU;

const SETTLE_ITERATIONS: usize = 8;
const SETTLE_SLOP: f64 = 1e-12;

/// Impulse resolution between two touching disks.
///
/// Returns the inputs unchanged when the disks are apart or already
/// separating along the contact normal.
pub fn resolve_disk_collision(
    a: &BodyState,
    b: &BodyState,
    restitution: f64,
    tangential_friction: f64,
) -> Result<(BodyState, BodyState), PhysicsError> {
    let (mut a2, mut b2) = (*a, *b);
    if a.inverse_mass() + b.inverse_mass() == 0.0 {
        return Err(PhysicsError::BothBodiesStatic);
    }
    let n = contact_normal(a, b);
    let touching = a.position.distance(b.position) <= a.radius + b.radius;
    if !touching || (b.velocity - a.velocity).dot(n) >= 0.0 {
        return Ok((a2, b2));
    }
    collide(&mut a2, &mut b2, restitution, tangential_friction)?;
    Ok((a2, b2))
}

fn contact_normal(a: &BodyState, b: &BodyState) -> Vec2 {
    let delta = b.position - a.position;
    let dist = delta.norm();
    if dist > 0.0 {
        delta / dist
    } else {
        Vec2::new(0.0, 1.0)
    }
}

/// Applies the restitution impulse when closing and removes any overlap.
/// Returns the contact when an impulse was applied.
pub(super) fn collide(
    a: &mut BodyState,
    b: &mut BodyState,
    restitution: f64,
    tangential_friction: f64,
) -> Result<Option<ContactPoint>, PhysicsError> {
    let ia = a.inverse_mass();
    let ib = b.inverse_mass();
    let inv_sum = ia + ib;
    if inv_sum == 0.0 {
        return Err(PhysicsError::BothBodiesStatic);
    }
    let dist = a.position.distance(b.position);
    let reach = a.radius + b.radius;
    if dist > reach {
        return Ok(None);
    }
    let n = contact_normal(a, b);
    let v_rel = b.velocity - a.velocity;
    let vn = v_rel.dot(n);

    let mut contact = None;
    if vn < 0.0 {
        let j = -(1.0 + restitution) * vn / inv_sum;
        a.velocity -= n * (j * ia);
        b.velocity += n * (j * ib);

        let t = n.perp();
        let jt = -tangential_friction * v_rel.dot(t) / inv_sum;
        a.velocity -= t * (jt * ia);
        b.velocity += t * (jt * ib);

        contact = Some(ContactPoint {
            position: a.position + n * a.radius,
            relative_speed: -vn,
        });
    }

    let overlap = reach - dist;
    if overlap > 0.0 {
        a.position -= n * (overlap * ia / inv_sum);
        b.position += n * (overlap * ib / inv_sum);
    }
    Ok(contact)
}

/// Reflects the normal velocity off any wall the disk touches and clamps the
/// disk inside the table.
pub fn resolve_wall_contact(
    body: &BodyState,
    bounds: &TableBounds,
    restitution: f64,
    tangential_friction: f64,
) -> BodyState {
    let mut out = *body;
    let xm = bounds.half_width - body.radius;
    let ym = bounds.half_length - body.radius;
    let keep = 1.0 - tangential_friction;

    if out.position.x >= xm {
        out.position.x = xm;
        if out.velocity.x > 0.0 {
            out.velocity.x *= -restitution;
            out.velocity.y *= keep;
        }
    } else if out.position.x <= -xm {
        out.position.x = -xm;
        if out.velocity.x < 0.0 {
            out.velocity.x *= -restitution;
            out.velocity.y *= keep;
        }
    }
    if out.position.y >= ym {
        out.position.y = ym;
        if out.velocity.y > 0.0 {
            out.velocity.y *= -restitution;
            out.velocity.x *= keep;
        }
    } else if out.position.y <= -ym {
        out.position.y = -ym;
        if out.velocity.y < 0.0 {
            out.velocity.y *= -restitution;
            out.velocity.x *= keep;
        }
    }
    out
}

/// Moves the kinematic paddle toward `target` for `dt` seconds.
///
/// The target is clamped to the paddle region, the paddle closes a fraction
/// `dt / tau` of the remaining gap (all of it when `dt >= tau`), and the
/// displacement is capped at `paddle_max_speed * dt`.
pub fn paddle_track(
    paddle: &BodyState,
    target: Vec2,
    params: &PhysicsParams,
    dt: f64,
) -> Result<BodyState, PhysicsError> {
    if !target.is_finite() {
        return Err(PhysicsError::InvalidTarget);
    }
    let target = params.table.clamp_paddle(target, paddle.radius);
    let gain = (dt / PADDLE_TRACKING_TAU).min(1.0);
    let mut disp = (target - paddle.position) * gain;
    let max = params.paddle_max_speed * dt;
    let len = disp.norm();
    if len > max {
        disp = disp * (max / len);
    }
    let mut out = *paddle;
    out.position = params.table.clamp_paddle(paddle.position + disp, paddle.radius);
    out.velocity = (out.position - paddle.position) / dt;
    Ok(out)
}

fn overlap(a: &BodyState, b: &BodyState) -> f64 {
    a.radius + b.radius - a.position.distance(b.position)
}

fn push_apart(a: &mut BodyState, b: &mut BodyState) {
    let depth = overlap(a, b);
    if !(depth > SETTLE_SLOP) {
        return;
    }
    let n = contact_normal(a, b);
    let (ia, ib) = (a.inverse_mass(), b.inverse_mass());
    let inv_sum = ia + ib;
    if inv_sum == 0.0 {
        return;
    }
    a.position -= n * (depth * ia / inv_sum);
    b.position += n * (depth * ib / inv_sum);
}

/// Positional cleanup after wall clamping. A body pinned between the paddle
/// and a wall pushes the paddle back rather than leaving the table.
pub(super) fn settle_positions(world: &mut WorldState, table: &TableBounds) {
    for _ in 0..SETTLE_ITERATIONS {
        let mut dynamic: Vec<&mut BodyState> =
            std::iter::once(&mut world.puck).chain(world.objects.iter_mut()).collect();
        let n = dynamic.len();
        for i in 0..n {
            for j in i + 1..n {
                let (lo, hi) = dynamic.split_at_mut(j);
                push_apart(lo[i], hi[0]);
            }
        }
        for body in dynamic.iter_mut() {
            push_apart(&mut world.paddle, body);
            body.position = table.clamp_inside(body.position, body.radius);
        }

        let mut clean = true;
        for body in dynamic.iter() {
            let depth = overlap(&world.paddle, body);
            if depth > SETTLE_SLOP {
                clean = false;
                let n = contact_normal(body, &world.paddle);
                let moved = world.paddle.position + n * depth;
                world.paddle.position = table.clamp_paddle(moved, world.paddle.radius);
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if overlap(dynamic[i], dynamic[j]) > SETTLE_SLOP {
                    clean = false;
                }
            }
        }
        if clean {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{BodyKind, TableBounds, PUCK_RADIUS};

    fn puck(pos: Vec2, vel: Vec2) -> BodyState {
        let mut b = BodyState::new(BodyKind::Puck, pos, PUCK_RADIUS, 0.025);
        b.velocity = vel;
        b
    }

    #[test]
    fn equal_mass_elastic_exchange() {
        let a = puck(Vec2::new(0.0, 2.0 * PUCK_RADIUS), Vec2::new(0.0, -1.0));
        let b = puck(Vec2::ZERO, Vec2::ZERO);
        let (a2, b2) = resolve_disk_collision(&a, &b, 1.0, 0.0).unwrap();
        assert!(a2.velocity.norm() < 1e-12);
        assert!((b2.velocity - Vec2::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn equal_mass_half_restitution() {
        let a = puck(Vec2::new(0.0, 2.0 * PUCK_RADIUS), Vec2::new(0.0, -1.0));
        let b = puck(Vec2::ZERO, Vec2::ZERO);
        let (a2, b2) = resolve_disk_collision(&a, &b, 0.5, 0.0).unwrap();
        assert!((a2.velocity.y + 0.25).abs() < 1e-12);
        assert!((b2.velocity.y + 0.75).abs() < 1e-12);
        assert!((a2.velocity.y + b2.velocity.y + 1.0).abs() < 1e-12);
        assert!(((a2.velocity.y - b2.velocity.y).abs() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn separating_contact_is_noop() {
        let b = puck(Vec2::new(0.0, 2.0 * PUCK_RADIUS), Vec2::ZERO);
        let a = puck(Vec2::ZERO, Vec2::new(0.0, 1.0));
        // a below b, moving toward b: closing. Flip to separate.
        let a_sep = puck(Vec2::ZERO, Vec2::new(0.0, -1.0));
        let (a2, b2) = resolve_disk_collision(&a_sep, &b, 0.9, 0.0).unwrap();
        assert_eq!((a2, b2), (a_sep, b));
        // The spec'd orientation: a below b with v_a=(0,1) into b is closing,
        // while b above moving away faster is not.
        let b_fast = puck(b.position, Vec2::new(0.0, 2.0));
        let (a3, b3) = resolve_disk_collision(&a, &b_fast, 0.9, 0.0).unwrap();
        assert_eq!((a3, b3), (a, b_fast));
    }

    #[test]
    fn apart_bodies_untouched() {
        let a = puck(Vec2::new(0.0, 1.0), Vec2::new(0.0, -1.0));
        let b = puck(Vec2::ZERO, Vec2::ZERO);
        assert_eq!(resolve_disk_collision(&a, &b, 0.9, 0.0).unwrap(), (a, b));
    }

    #[test]
    fn two_paddles_are_static() {
        let p = BodyState::new(BodyKind::Paddle, Vec2::ZERO, 0.05, 0.16);
        assert_eq!(
            resolve_disk_collision(&p, &p, 0.9, 0.0).unwrap_err(),
            PhysicsError::BothBodiesStatic
        );
    }

    #[test]
    fn kinematic_paddle_takes_no_impulse() {
        let mut paddle = BodyState::new(BodyKind::Paddle, Vec2::ZERO, 0.047625, 0.16);
        paddle.velocity = Vec2::new(0.0, 1.0);
        let p = puck(Vec2::new(0.0, 0.047625 + PUCK_RADIUS), Vec2::new(0.0, -1.0));
        let (paddle2, p2) = resolve_disk_collision(&paddle, &p, 0.9, 0.0).unwrap();
        assert_eq!(paddle2, paddle);
        // relative normal speed 2 -> 1.8 reversed, plus paddle velocity
        assert!((p2.velocity.y - (1.0 + 0.9 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn wall_reflection() {
        let bounds = TableBounds::default();
        let at_right = Vec2::new(bounds.half_width - PUCK_RADIUS, 0.0);
        let b = puck(at_right, Vec2::new(1.0, 0.0));
        assert_eq!(resolve_wall_contact(&b, &bounds, 1.0, 0.0).velocity, Vec2::new(-1.0, 0.0));
        let b = puck(at_right, Vec2::new(1.0, 2.0));
        let v = resolve_wall_contact(&b, &bounds, 0.85, 0.0).velocity;
        assert!((v.x + 0.85).abs() < 1e-15 && v.y == 2.0);
        let inside = puck(Vec2::new(0.1, 0.1), Vec2::new(1.0, 2.0));
        assert_eq!(resolve_wall_contact(&inside, &bounds, 0.85, 0.0), inside);
    }

    #[test]
    fn penetrating_wall_is_clamped() {
        let bounds = TableBounds::default();
        let b = puck(Vec2::new(0.0, -1.0), Vec2::new(0.0, -0.5));
        let out = resolve_wall_contact(&b, &bounds, 0.85, 0.2);
        assert!((out.position.y + bounds.half_length - PUCK_RADIUS).abs() < 1e-15);
        assert!((out.velocity.y - 0.425).abs() < 1e-15);
    }

    #[test]
    fn paddle_tracking_cases() {
        let params = PhysicsParams::default();
        let paddle = BodyState::new(BodyKind::Paddle, Vec2::new(0.0, -0.7), 0.047625, 0.16);

        let same = paddle_track(&paddle, paddle.position, &params, 0.05).unwrap();
        assert_eq!(same.position, paddle.position);
        assert_eq!(same.velocity, Vec2::ZERO);

        let up = paddle_track(&paddle, Vec2::new(0.0, 0.3), &params, 0.05).unwrap();
        assert!(((up.position - paddle.position).norm() - 0.1).abs() < 1e-12);

        let mut near_top = paddle;
        near_top.position.y = params.table.paddle_region_y_max - 0.01;
        let clamped = paddle_track(&near_top, Vec2::new(0.0, 0.8), &params, 0.05).unwrap();
        assert!(clamped.position.y <= params.table.paddle_region_y_max);

        assert_eq!(
            paddle_track(&paddle, Vec2::new(f64::NAN, 0.0), &params, 0.05).unwrap_err(),
            PhysicsError::InvalidTarget
        );
    }
}
