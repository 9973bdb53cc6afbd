use crate::error::{ensure, Error, Result};
use crate::types::{Pose, Twist, Vec3};

use super::contact::{resolve, Resolved};
use super::model::{StemModel, WorldModels};
use super::state::{transition_events, StemState, StepResult, WorldState};

pub const MAX_DT: f64 = 0.002;

/// Advance the world by `dt` under the end-effector `twist`.
///
/// Order within a tick: move the end effector, resolve contacts against the
/// new finger pose, then integrate every stem (semi-implicit Euler, damping
/// treated implicitly).
pub fn step(state: &WorldState, twist: &Twist, dt: f64, world: &WorldModels) -> Result<StepResult> {
    ensure(dt > 0.0 && dt <= MAX_DT, "dt", || format!("{dt} outside (0, {MAX_DT}]"))?;
    ensure(twist.is_finite(), "twist", || format!("non-finite twist {twist:?}"))?;
    ensure(
        state.distractors.len() == world.distractors.len(),
        "distractors",
        || "state and models disagree on the number of distractors".into(),
    )?;

    let ee_pose = state.ee_pose.integrate(twist, dt);
    let finger_pose = world.finger.world_pose(&ee_pose);
    let gravity = world.gravity();
    let advance = |model: &StemModel, s: &StemState| -> StemState {
        let r = resolve(
            model,
            s.q,
            s.u_att,
            s.is_sliding(),
            &world.finger,
            &finger_pose,
            &world.friction,
        );
        integrate_stem(model, s, &r, &gravity, dt)
    };

    let stem = advance(&world.stem, &state.stem);
    let distractors = world
        .distractors
        .iter()
        .zip(&state.distractors)
        .map(|(m, s)| advance(m, s))
        .collect();
    let next = WorldState {
        stem,
        distractors,
        ee_pose,
        time: state.time + dt,
    };
    check_finite(&next)?;
    next.check_invariants()?;
    let events = transition_events(&state.stem.contact, &next.stem.contact);
    Ok(StepResult { next, events })
}

fn integrate_stem(model: &StemModel, s: &StemState, contact: &Resolved, gravity: &Vec3, dt: f64) -> StemState {
    let jac = model.direction_jacobian(s.q);
    let r2 = s.q[0] * s.q[0] + s.q[1] * s.q[1];
    let stiffness = model.k1 + model.k3 * r2;
    let inertia = model.inertia();
    let weight = gravity * (model.tip_mass * model.length);
    let mut q = [0.0; 2];
    let mut qdot = [0.0; 2];
    for j in 0..2 {
        let generalized = jac[j].dot(&(contact.force * contact.lever + weight)) - stiffness * s.q[j];
        qdot[j] = (s.qdot[j] + dt * generalized / inertia) / (1.0 + dt * model.damping / inertia);
        q[j] = s.q[j] + dt * qdot[j];
    }
    StemState {
        q,
        qdot,
        u_att: contact.u_att,
        contact: contact.contact,
    }
}

fn check_finite(s: &WorldState) -> Result<()> {
    let diverged = |field: &str| Error::Diverged {
        field: field.to_string(),
        time: s.time,
    };
    for (i, st) in s.stems().enumerate() {
        let prefix = if i == 0 { "stem".to_string() } else { format!("distractors[{}]", i - 1) };
        if !st.q.iter().all(|v| v.is_finite()) {
            return Err(diverged(&format!("{prefix}.q")));
        }
        if !st.qdot.iter().all(|v| v.is_finite()) {
            return Err(diverged(&format!("{prefix}.qdot")));
        }
        let c = &st.contact;
        if ![c.u, c.penetration, c.normal_force, c.tangential_force].iter().all(|v| v.is_finite()) {
            return Err(diverged(&format!("{prefix}.contact")));
        }
    }
    if !s.ee_pose.is_finite() {
        return Err(diverged("ee_pose"));
    }
    Ok(())
}

/// Kinetic plus potential energy of one stem.
pub fn stem_energy(model: &StemModel, s: &StemState, gravity: &Vec3) -> f64 {
    let v2 = s.qdot[0] * s.qdot[0] + s.qdot[1] * s.qdot[1];
    0.5 * model.inertia() * v2 + model.potential_energy(s.q, gravity)
}

/// End-effector pose that puts the membrane at `u` just touching the rest
/// stem at distance `lever` from its anchor, approaching along `push_dir`
/// (horizontal), with the finger yawed by `yaw` relative to the
/// perpendicular of the push. `standoff` is the gap left before contact.
pub fn approach_pose(
    world: &WorldModels,
    u: f64,
    lever: f64,
    push_dir: Vec3,
    yaw: f64,
    standoff: f64,
) -> Pose {
    let stem = &world.stem;
    let point = stem.anchor() + stem.direction([0.0, 0.0]) * lever;
    let push = push_dir.normalize();
    let push_yaw = push.y.atan2(push.x) - std::f64::consts::FRAC_PI_2;
    // finger frame: membrane normal along the push, yawed by `yaw`
    let finger_rot = nalgebra::Rotation3::from_euler_angles(0.0, 0.0, push_yaw + yaw);
    let axis = finger_rot * Vec3::x();
    let membrane = finger_rot * Vec3::y();
    let clearance = world.finger.radius_at(u) + stem.radius + standoff;
    let finger_origin = point - axis * (u * world.finger.length) - membrane * clearance;
    // ee = finger_pose * mount^-1
    let mount = &world.finger.mount;
    let mount_rot = mount.rotation();
    let ee_rot = finger_rot * mount_rot.inverse();
    let ee_pos = finger_origin - ee_rot * mount.translation();
    Pose::from_parts(ee_pos, &ee_rot)
}
