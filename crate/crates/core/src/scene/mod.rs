//! World state, scenario construction, kinematic stepping and the low-fidelity
//! mapping from world state to per-actor salient vectors.

mod salient;
mod scenario;
mod step;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, OrientedBox, Polyline, Vec2};

pub use salient::{extract_salient, SalientVector, FEATURE_COUNT, FEATURE_NAMES};
pub use scenario::{
    build_acc_scenario, build_scenario, build_urban_scenario, AccParams, ScenarioKind,
    ScenarioSpec, UrbanParams,
};
pub use step::{step_ego, step_world, ControlInput};

pub type ActorId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorClass {
    Vehicle,
    Pedestrian,
}

impl ActorClass {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            ActorClass::Vehicle => 0,
            ActorClass::Pedestrian => 1,
        }
    }

    pub fn one_hot(self) -> [f64; Self::COUNT] {
        let mut v = [0.0; Self::COUNT];
        v[self.index()] = 1.0;
        v
    }

    pub fn from_one_hot(v: &[f64]) -> ActorClass {
        if v.get(1).copied().unwrap_or(0.0) > v.first().copied().unwrap_or(0.0) {
            ActorClass::Pedestrian
        } else {
            ActorClass::Vehicle
        }
    }
}

/// Planar pose. The constructor wraps `yaw` into `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Maps a point given in this pose's frame to the world frame.
    pub fn to_world(&self, local: Vec2) -> Vec2 {
        self.position() + local.rotate(self.yaw)
    }

    /// Maps a world point into this pose's frame.
    pub fn to_local(&self, world: Vec2) -> Vec2 {
        (world - self.position()).rotate(-self.yaw)
    }

    /// `self ∘ local`: the pose `local`, expressed relative to `self`, in world coordinates.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let p = self.to_world(local.position());
        Pose2D::new(p.x, p.y, self.yaw + local.yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub length: f64,
    pub width: f64,
}

impl Extent {
    pub const fn new(length: f64, width: f64) -> Self {
        Self { length, width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: ActorId,
    pub class: ActorClass,
    pub pose: Pose2D,
    /// Speed along the heading, m/s.
    pub speed: f64,
    pub angular_velocity: f64,
    pub extent: Extent,
    pub is_ego: bool,
}

impl ActorState {
    pub fn bbox(&self) -> OrientedBox {
        OrientedBox::new(
            self.pose.position(),
            self.extent.length,
            self.extent.width,
            self.pose.yaw,
        )
    }

    /// World-frame velocity vector.
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.pose.yaw) * self.speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub centreline: Polyline,
    pub width: f64,
}

/// The ego's planned path and the junction nodes along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub path: Polyline,
    pub lane_width: f64,
    pub junctions: Vec<Vec2>,
}

/// Sideways manoeuvre applied on top of a path-following script.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChange {
    pub start_time: f64,
    pub duration: f64,
    /// Final lateral offset, positive to the left of travel.
    pub offset: f64,
}

impl LaneChange {
    /// Lateral offset and its time derivative at time `t`.
    pub fn offset_at(&self, t: f64) -> (f64, f64) {
        if t <= self.start_time {
            return (0.0, 0.0);
        }
        let u = (t - self.start_time) / self.duration;
        if u >= 1.0 {
            return (self.offset, 0.0);
        }
        let phase = std::f64::consts::PI * u;
        let off = 0.5 * self.offset * (1.0 - phase.cos());
        let rate = 0.5 * self.offset * phase.sin() * std::f64::consts::PI / self.duration;
        (off, rate)
    }
}

/// Non-reactive behaviour of a background actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Script {
    Stationary,
    FollowPath {
        path: Polyline,
        /// Arc length at the initial time.
        s0: f64,
        speed: f64,
        /// Wrap around when the end of `path` is reached.
        looped: bool,
        lane_change: Option<LaneChange>,
    },
}

impl Script {
    /// Pose and speed of a scripted actor at absolute time `t`.
    pub fn pose_at(&self, t: f64, fallback: Pose2D) -> (Pose2D, f64) {
        match self {
            Script::Stationary => (fallback, 0.0),
            Script::FollowPath {
                path,
                s0,
                speed,
                looped,
                lane_change,
            } => {
                let len = path.length();
                let mut s = s0 + speed * t;
                let mut moving = *speed;
                if *looped && len > 0.0 {
                    s = s.rem_euclid(len);
                } else if s >= len {
                    s = len;
                    moving = 0.0;
                }
                let (p, heading) = path.sample(s);
                let (lat, lat_rate) = lane_change.map(|lc| lc.offset_at(t)).unwrap_or((0.0, 0.0));
                let normal = Vec2::from_angle(heading).perp();
                let pos = p + normal * lat;
                let yaw = heading + lat_rate.atan2(moving.max(1e-9));
                let speed = moving.hypot(lat_rate);
                (Pose2D::new(pos.x, pos.y, yaw), speed)
            }
        }
    }
}

/// Bounds of the ego's kinematic bicycle model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleLimits {
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_speed: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_steer_rate: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self {
            max_accel: 3.0,
            max_decel: 8.0,
            max_speed: 30.0,
            wheelbase: 2.8,
            max_steer: 0.6,
            max_steer_rate: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub actors: Vec<ActorState>,
    pub lanes: Vec<Lane>,
    pub scripts: BTreeMap<ActorId, Script>,
    pub route: Route,
    pub limits: VehicleLimits,
    /// Current road-wheel angle of the ego.
    pub ego_steer: f64,
    /// Actors currently overlapping the ego.
    pub contacts: BTreeSet<ActorId>,
    /// Collision onsets produced by the most recent step.
    pub collisions: Vec<ActorId>,
}

impl WorldState {
    pub fn ego(&self) -> &ActorState {
        self.actors
            .iter()
            .find(|a| a.is_ego)
            .expect("world state always holds an ego actor")
    }

    pub fn ego_index(&self) -> usize {
        self.actors
            .iter()
            .position(|a| a.is_ego)
            .expect("world state always holds an ego actor")
    }

    pub fn actor(&self, id: ActorId) -> Option<&ActorState> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn others(&self) -> impl Iterator<Item = &ActorState> {
        self.actors.iter().filter(|a| !a.is_ego)
    }

    /// Axis-aligned bounds of all lanes, grown by `margin`.
    pub fn map_bounds(&self, margin: f64) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self
            .lanes
            .iter()
            .flat_map(|l| l.centreline.points())
            .chain(self.route.path.points())
        {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (
            Vec2::new(lo.x - margin, lo.y - margin),
            Vec2::new(hi.x + margin, hi.y + margin),
        )
    }

    /// Checks the structural invariants: one ego, unique ids, positive extents.
    pub fn validate(&self) -> crate::Result<()> {
        let egos = self.actors.iter().filter(|a| a.is_ego).count();
        if egos != 1 {
            return Err(crate::Error::InvalidScenario(format!(
                "expected exactly one ego actor, found {egos}"
            )));
        }
        let mut ids = BTreeSet::new();
        for a in &self.actors {
            if !ids.insert(a.id) {
                return Err(crate::Error::InvalidScenario(format!(
                    "duplicate actor id {}",
                    a.id
                )));
            }
            if !(a.extent.length > 0.0 && a.extent.width > 0.0) {
                return Err(crate::Error::InvalidScenario(format!(
                    "actor {} has non-positive extent",
                    a.id
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_round_trips_points() {
        let pose = Pose2D::new(3.0, -2.0, 0.7);
        let p = Vec2::new(1.25, 4.5);
        let back = pose.to_world(pose.to_local(p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn lane_change_profile_is_smooth() {
        let lc = LaneChange {
            start_time: 10.0,
            duration: 2.0,
            offset: 3.5,
        };
        assert_eq!(lc.offset_at(9.0), (0.0, 0.0));
        assert_eq!(lc.offset_at(10.0), (0.0, 0.0));
        let (mid, rate) = lc.offset_at(11.0);
        assert!((mid - 1.75).abs() < 1e-12);
        assert!(rate > 0.0);
        assert_eq!(lc.offset_at(12.5).0, 3.5);
    }

    #[test]
    fn one_hot_sums_to_one() {
        for c in [ActorClass::Vehicle, ActorClass::Pedestrian] {
            assert_eq!(c.one_hot().iter().sum::<f64>(), 1.0);
            assert_eq!(ActorClass::from_one_hot(&c.one_hot()), c);
        }
    }
}
