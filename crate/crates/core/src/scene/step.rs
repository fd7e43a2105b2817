use serde::{Deserialize, Serialize};

use super::{ActorState, Pose2D, VehicleLimits, WorldState};

/// Actuator command for the ego. Components are clamped on use.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub throttle: f64,
    pub brake: f64,
    pub steer: f64,
}

impl ControlInput {
    pub fn clamped(self) -> Self {
        Self {
            throttle: self.throttle.clamp(0.0, 1.0),
            brake: self.brake.clamp(0.0, 1.0),
            steer: self.steer.clamp(-1.0, 1.0),
        }
    }
}

/// Advances the ego with a kinematic bicycle model (rear-axle reference,
/// explicit Euler). Returns the new state and road-wheel angle.
pub fn step_ego(
    ego: &ActorState,
    steer_angle: f64,
    control: ControlInput,
    dt: f64,
    limits: &VehicleLimits,
) -> (ActorState, f64) {
    let c = control.clamped();
    let accel = c.throttle * limits.max_accel - c.brake * limits.max_decel;

    let target = c.steer * limits.max_steer;
    let max_delta = limits.max_steer_rate * dt;
    let steer = steer_angle + (target - steer_angle).clamp(-max_delta, max_delta);

    let v = ego.speed.clamp(0.0, limits.max_speed);
    let yaw_rate = v / limits.wheelbase * steer.tan();
    let (s, co) = ego.pose.yaw.sin_cos();
    let pose = Pose2D::new(
        ego.pose.x + v * co * dt,
        ego.pose.y + v * s * dt,
        ego.pose.yaw + yaw_rate * dt,
    );
    let speed = (v + accel * dt).clamp(0.0, limits.max_speed);

    let next = ActorState {
        pose,
        speed,
        angular_velocity: yaw_rate,
        ..ego.clone()
    };
    (next, steer)
}

/// Advances the whole world by `dt`.
///
/// Scripted actors are placed from their script at the new time. A collision
/// event is emitted for every actor that starts overlapping the ego during
/// the step; while any contact persists the ego is held at rest.
pub fn step_world(state: &WorldState, control: ControlInput, dt: f64) -> WorldState {
    assert!(dt > 0.0, "dt must be positive");
    let mut next = state.clone();
    next.time = state.time + dt;

    let ego_idx = state.ego_index();
    if state.contacts.is_empty() {
        let (ego, steer) = step_ego(&state.actors[ego_idx], state.ego_steer, control, dt, &state.limits);
        next.actors[ego_idx] = ego;
        next.ego_steer = steer;
    } else {
        let ego = &mut next.actors[ego_idx];
        ego.speed = 0.0;
        ego.angular_velocity = 0.0;
    }

    for actor in next.actors.iter_mut().filter(|a| !a.is_ego) {
        if let Some(script) = state.scripts.get(&actor.id) {
            let (pose, speed) = script.pose_at(next.time, actor.pose);
            actor.angular_velocity = crate::geometry::normalize_angle(pose.yaw - actor.pose.yaw) / dt;
            actor.pose = pose;
            actor.speed = speed;
        }
    }

    let ego_box = next.actors[ego_idx].bbox();
    let contacts: std::collections::BTreeSet<_> = next
        .actors
        .iter()
        .filter(|a| !a.is_ego && a.bbox().overlaps(&ego_box))
        .map(|a| a.id)
        .collect();
    next.collisions = contacts.difference(&state.contacts).copied().collect();
    if !contacts.is_empty() {
        next.actors[ego_idx].speed = 0.0;
    }
    next.contacts = contacts;
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_acc_scenario, ScenarioSpec, Script};

    fn still_world() -> WorldState {
        let mut w = build_acc_scenario(&ScenarioSpec::acc()).unwrap();
        for a in &mut w.actors {
            a.speed = 0.0;
        }
        for s in w.scripts.values_mut() {
            *s = Script::Stationary;
        }
        w
    }

    #[test]
    fn stationary_world_only_advances_time() {
        let w = still_world();
        let n = step_world(&w, ControlInput::default(), 0.05);
        assert_eq!(n.time, 0.05);
        for (a, b) in w.actors.iter().zip(&n.actors) {
            assert_eq!(a.pose, b.pose);
        }
        assert!(n.collisions.is_empty());
    }

    #[test]
    fn straight_line_displacement() {
        let mut w = still_world();
        let idx = w.ego_index();
        w.actors[idx].speed = 12.0;
        let dt = 0.05;
        let n = step_world(&w, ControlInput::default(), dt);
        let d = n.ego().pose.position() - w.ego().pose.position();
        assert!((d.x - 12.0 * dt).abs() < 1e-9);
        assert!(d.y.abs() < 1e-9);
        assert_eq!(n.ego().speed, 12.0);
    }

    #[test]
    fn overlap_emits_one_collision_event() {
        let mut w = still_world();
        let idx = w.ego_index();
        w.actors[idx].pose = Pose2D::new(205.8, 0.0, 0.0);
        w.actors[idx].speed = 5.0;
        let n = step_world(&w, ControlInput::default(), 0.05);
        assert_eq!(n.collisions, vec![2]);
        assert_eq!(n.ego().speed, 0.0);
        let n2 = step_world(&n, ControlInput { throttle: 1.0, ..Default::default() }, 0.05);
        assert!(n2.collisions.is_empty(), "persisting contact is not a new event");
        assert_eq!(n2.ego().pose, n.ego().pose);
    }

    #[test]
    fn steering_rate_is_bounded() {
        let mut w = still_world();
        let idx = w.ego_index();
        w.actors[idx].speed = 10.0;
        let n = step_world(&w, ControlInput { steer: 1.0, ..Default::default() }, 0.05);
        assert!((n.ego_steer - w.limits.max_steer_rate * 0.05).abs() < 1e-12);
    }
}
