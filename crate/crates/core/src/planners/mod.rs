//! Downstream planners: adaptive cruise control and a route-following agent,
//! both driving a speed PID. Planners only look at `detected` outputs, so a
//! missed actor is invisible to them.

mod pid;

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::geometry::{normalize_angle, OrientedBox, Vec2};
use crate::scene::{ActorClass, ActorState, ControlInput, Route, VehicleLimits};

pub use pid::{pid_control, PidGains, PidState};

/// Actuator command; throttle and brake are never both non-zero.
pub type ControlCommand = ControlInput;

/// Everything a planner sees in one frame.
#[derive(Debug, Clone, Copy)]
pub struct PlannerInput<'a> {
    pub ego: &'a ActorState,
    /// Ego-frame perception outputs.
    pub detections: &'a [Detection],
    pub route: &'a Route,
    pub limits: &'a VehicleLimits,
    pub dt: f64,
}

/// Pure-pursuit steering towards the route point `lookahead` metres past
/// arc length `s`, normalised by the steering limit.
pub fn pure_pursuit(ego: &ActorState, route: &Route, s: f64, lookahead: f64, limits: &VehicleLimits) -> f64 {
    let (target, _) = route.path.sample(s + lookahead);
    let local = ego.pose.to_local(target);
    let ld2 = local.norm_squared();
    if ld2 < 1e-9 {
        return 0.0;
    }
    let curvature = 2.0 * local.y / ld2;
    let delta = (limits.wheelbase * curvature).atan();
    (delta / limits.max_steer).clamp(-1.0, 1.0)
}

fn pursuit_distance(speed: f64) -> f64 {
    (4.0 + 0.8 * speed).max(4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccConfig {
    pub max_speed: f64,
    /// Obstacles beyond this bumper gap are ignored.
    pub lookahead: f64,
    /// Deceleration the approach profile is planned with.
    pub comfort_decel: f64,
    /// Bumper gap kept at standstill.
    pub standstill_gap: f64,
    /// Below this bumper gap the planner brakes fully.
    pub emergency_gap: f64,
    pub gains: PidGains,
}

impl Default for AccConfig {
    fn default() -> Self {
        Self {
            max_speed: 15.0,
            lookahead: 50.0,
            comfort_decel: 2.5,
            standstill_gap: 5.0,
            emergency_gap: 0.1,
            gains: PidGains::default(),
        }
    }
}

/// An in-lane obstacle as seen along the route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadObstacle {
    pub gap: f64,
    pub speed: f64,
}

/// Cruise at a set speed; match slower same-lane vehicles ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct AccPlanner {
    pub cfg: AccConfig,
    pub pid: PidState,
}

impl AccPlanner {
    pub fn new(cfg: AccConfig) -> Self {
        Self {
            cfg,
            pid: PidState::default(),
        }
    }

    /// Same-lane detections ahead within the lookahead. Detections without
    /// a velocity estimate yet are skipped.
    pub fn obstacles(&self, input: &PlannerInput) -> Vec<LeadObstacle> {
        let ego = input.ego;
        let path = &input.route.path;
        let ego_proj = path.project(ego.pose.position());
        let half_lane = 0.5 * input.route.lane_width;
        input
            .detections
            .iter()
            .filter(|d| d.detected)
            .filter_map(|d| {
                let v = d.velocity?;
                let world = ego.pose.to_world(d.position);
                let p = path.project(world);
                if p.lateral.abs() >= half_lane {
                    return None;
                }
                let ahead = p.s - ego_proj.s;
                if ahead <= 0.0 {
                    return None;
                }
                let gap = ahead - 0.5 * (ego.extent.length + d.extent.length);
                if gap > self.cfg.lookahead {
                    return None;
                }
                let along = Vec2::from_angle(p.heading);
                let speed = v.rotate(ego.pose.yaw).dot(along).max(0.0);
                Some(LeadObstacle { gap, speed })
            })
            .collect()
    }

    /// Target speed given the obstacles ahead.
    pub fn desired_speed(&self, obstacles: &[LeadObstacle]) -> f64 {
        obstacles.iter().fold(self.cfg.max_speed, |acc, o| {
            let room = o.gap - self.cfg.standstill_gap;
            let v = (o.speed * o.speed + 2.0 * self.cfg.comfort_decel * room).max(0.0).sqrt();
            acc.min(v)
        })
    }

    pub fn plan(&mut self, input: &PlannerInput) -> ControlCommand {
        let obstacles = self.obstacles(input);
        let s = input.route.path.project(input.ego.pose.position()).s;
        let steer = pure_pursuit(input.ego, input.route, s, pursuit_distance(input.ego.speed), input.limits);
        let v_des = self.desired_speed(&obstacles);
        let mut cmd = pid_control(v_des, input.ego.speed, &mut self.pid, &self.cfg.gains, input.dt);
        if obstacles.iter().any(|o| o.gap < self.cfg.emergency_gap) {
            cmd.throttle = 0.0;
            cmd.brake = 1.0;
        }
        cmd.steer = steer;
        cmd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasicAgentConfig {
    pub cruise_speed: f64,
    pub junction_speed: f64,
    /// Distance from a junction node inside which `junction_speed` applies.
    pub junction_radius: f64,
    /// Hard cap on the braking rectangle length.
    pub lookahead: f64,
    /// Braking rectangle length is `base_brake_distance + headway * speed`.
    pub base_brake_distance: f64,
    pub headway: f64,
    /// Radius of the frontal half-disc checked for pedestrians.
    pub pedestrian_radius: f64,
    pub gains: PidGains,
}

impl Default for BasicAgentConfig {
    fn default() -> Self {
        Self {
            cruise_speed: 8.0,
            junction_speed: 4.0,
            junction_radius: 12.0,
            lookahead: 50.0,
            base_brake_distance: 4.0,
            headway: 1.0,
            pedestrian_radius: 8.0,
            gains: PidGains::default(),
        }
    }
}

/// Why the agent is braking or slowing, for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentState {
    Cruising,
    Junction,
    VehicleHazard,
    PedestrianHazard,
    RouteComplete,
}

/// Pure-pursuit route follower with rule-based emergency braking.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicAgentPlanner {
    pub cfg: BasicAgentConfig,
    pub pid: PidState,
    /// Arc length reached along the route.
    pub progress: f64,
    pub state: AgentState,
}

impl BasicAgentPlanner {
    pub fn new(cfg: BasicAgentConfig) -> Self {
        Self {
            cfg,
            pid: PidState::default(),
            progress: 0.0,
            state: AgentState::Cruising,
        }
    }

    /// True if any corner of `bbox` (world frame) lies in the lane-width
    /// corridor along the route between `s0` and `s0 + length`.
    pub fn in_corridor(route: &Route, bbox: &OrientedBox, s0: f64, length: f64) -> bool {
        let half = 0.5 * route.lane_width;
        bbox.corners().iter().any(|&c| {
            route
                .path
                .project_window(c, s0, s0 + length)
                .is_some_and(|p| p.s > s0 && p.lateral.abs() < half)
        })
    }

    pub fn plan(&mut self, input: &PlannerInput) -> ControlCommand {
        let ego = input.ego;
        let path = &input.route.path;
        let pos = ego.pose.position();
        if let Some(p) = path.project_window(pos, self.progress - 5.0, self.progress + 25.0) {
            self.progress = self.progress.max(p.s);
        }
        let front = self.progress + 0.5 * ego.extent.length;
        if self.progress >= path.length() - 1.0 {
            self.state = AgentState::RouteComplete;
            self.pid = PidState::default();
            return ControlCommand {
                throttle: 0.0,
                brake: 1.0,
                steer: 0.0,
            };
        }

        let brake_len = (self.cfg.base_brake_distance + self.cfg.headway * ego.speed).min(self.cfg.lookahead);
        let mut hazard = None;
        for d in input.detections.iter().filter(|d| d.detected) {
            match d.class {
                ActorClass::Vehicle => {
                    let world = OrientedBox::new(
                        ego.pose.to_world(d.position),
                        d.extent.length,
                        d.extent.width,
                        normalize_angle(d.yaw + ego.pose.yaw),
                    );
                    if Self::in_corridor(input.route, &world, front, brake_len) {
                        hazard = Some(AgentState::VehicleHazard);
                        break;
                    }
                }
                ActorClass::Pedestrian => {
                    let front_local = d.position - Vec2::new(0.5 * ego.extent.length, 0.0);
                    if front_local.x >= 0.0 && front_local.norm() < self.cfg.pedestrian_radius {
                        hazard = Some(AgentState::PedestrianHazard);
                        break;
                    }
                }
            }
        }

        let steer = pure_pursuit(ego, input.route, self.progress, pursuit_distance(ego.speed), input.limits);
        let near_junction = input
            .route
            .junctions
            .iter()
            .any(|j| (*j - pos).norm() < self.cfg.junction_radius);
        let target = if near_junction {
            self.cfg.junction_speed
        } else {
            self.cfg.cruise_speed
        };
        let mut cmd = pid_control(target, ego.speed, &mut self.pid, &self.cfg.gains, input.dt);
        self.state = match hazard {
            Some(h) => {
                cmd.throttle = 0.0;
                cmd.brake = 1.0;
                h
            }
            None if near_junction => AgentState::Junction,
            None => AgentState::Cruising,
        };
        cmd.steer = steer;
        cmd
    }
}

/// Either planner behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Planner {
    Acc(AccPlanner),
    BasicAgent(BasicAgentPlanner),
}

impl Planner {
    pub fn plan(&mut self, input: &PlannerInput) -> ControlCommand {
        match self {
            Planner::Acc(p) => p.plan(input),
            Planner::BasicAgent(p) => p.plan(input),
        }
    }
}
