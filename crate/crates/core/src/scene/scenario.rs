use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    ActorClass, ActorId, ActorState, Extent, Lane, LaneChange, Pose2D, Route, Script,
    VehicleLimits, WorldState,
};
use crate::geometry::{Polyline, Vec2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Acc,
    UrbanRoutes,
}

/// Adaptive-cruise-control layout: ego follows a lead that cuts out of the
/// lane in front of a parked car. Distances are centre-to-centre along +x
/// from the ego's start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccParams {
    pub ego_speed: f64,
    pub lead_distance: f64,
    pub lead_speed: f64,
    pub parked_distance: f64,
    pub cut_out_time: f64,
    pub cut_out_duration: f64,
    pub lane_width: f64,
    pub road_length: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// Jitter speeds, distances and the trigger time from the scenario seed.
    pub randomize: bool,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            ego_speed: 15.0,
            lead_distance: 25.0,
            lead_speed: 15.0,
            parked_distance: 210.0,
            cut_out_time: 8.0,
            cut_out_duration: 3.0,
            lane_width: 3.5,
            road_length: 400.0,
            vehicle_length: 4.5,
            vehicle_width: 1.9,
            randomize: false,
        }
    }
}

/// Square grid road network with two-way roads and right-hand traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrbanParams {
    pub n_vehicles: usize,
    pub n_pedestrians: usize,
    /// Nodes per side of the grid.
    pub grid_nodes: usize,
    pub block_length: f64,
    pub lane_width: f64,
    pub route_segments: usize,
    pub vehicle_speed_min: f64,
    pub vehicle_speed_max: f64,
    pub pedestrian_speed_min: f64,
    pub pedestrian_speed_max: f64,
}

impl Default for UrbanParams {
    fn default() -> Self {
        Self {
            n_vehicles: 20,
            n_pedestrians: 0,
            grid_nodes: 3,
            block_length: 80.0,
            lane_width: 3.5,
            route_segments: 6,
            vehicle_speed_min: 5.0,
            vehicle_speed_max: 10.0,
            pedestrian_speed_min: 1.0,
            pedestrian_speed_max: 1.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub duration: f64,
    #[serde(default = "default_timestep")]
    pub timestep: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub acc: AccParams,
    #[serde(default)]
    pub urban: UrbanParams,
    #[serde(default)]
    pub limits: VehicleLimits,
}

fn default_timestep() -> f64 {
    0.05
}

impl ScenarioSpec {
    pub fn acc() -> Self {
        Self {
            kind: ScenarioKind::Acc,
            duration: 25.0,
            timestep: default_timestep(),
            seed: 0,
            acc: AccParams::default(),
            urban: UrbanParams::default(),
            limits: VehicleLimits::default(),
        }
    }

    pub fn urban() -> Self {
        Self {
            kind: ScenarioKind::UrbanRoutes,
            duration: 60.0,
            ..Self::acc()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return Err(Error::InvalidScenario("timestep must be positive".into()));
        }
        if !(self.duration >= self.timestep && self.duration.is_finite()) {
            return Err(Error::InvalidScenario(
                "duration must be at least one timestep".into(),
            ));
        }
        let l = &self.limits;
        for (name, v) in [
            ("max_accel", l.max_accel),
            ("max_decel", l.max_decel),
            ("max_speed", l.max_speed),
            ("wheelbase", l.wheelbase),
            ("max_steer", l.max_steer),
            ("max_steer_rate", l.max_steer_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidScenario(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of simulation steps covering `duration`.
    pub fn steps(&self) -> usize {
        (self.duration / self.timestep).round().max(1.0) as usize
    }
}

/// Dispatches on the scenario kind.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<WorldState> {
    match spec.kind {
        ScenarioKind::Acc => build_acc_scenario(spec),
        ScenarioKind::UrbanRoutes => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            build_urban_scenario(spec, &mut rng)
        }
    }
}

fn check_non_negative(name: &str, v: f64) -> Result<()> {
    if v < 0.0 || !v.is_finite() {
        return Err(Error::InvalidScenario(format!(
            "{name} must be a non-negative finite number, got {v}"
        )));
    }
    Ok(())
}

fn check_no_overlaps(actors: &[ActorState]) -> Result<()> {
    for (i, a) in actors.iter().enumerate() {
        for b in &actors[i + 1..] {
            if a.bbox().overlaps(&b.bbox()) {
                return Err(Error::InvalidScenario(format!(
                    "actors {} and {} overlap initially",
                    a.id, b.id
                )));
            }
        }
    }
    Ok(())
}

pub fn build_acc_scenario(spec: &ScenarioSpec) -> Result<WorldState> {
    if spec.kind != ScenarioKind::Acc {
        return Err(Error::InvalidScenario("expected an acc scenario".into()));
    }
    spec.validate()?;
    let mut p = spec.acc.clone();
    if p.randomize {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        p.ego_speed += rng.random_range(-2.0..2.0);
        p.lead_speed = p.ego_speed + rng.random_range(-1.0..1.5);
        p.lead_distance += rng.random_range(-5.0..8.0);
        p.parked_distance += rng.random_range(-40.0..40.0);
        p.cut_out_time += rng.random_range(-2.0..2.0);
        p.cut_out_duration += rng.random_range(-0.5..0.5);
    }
    for (name, v) in [
        ("ego_speed", p.ego_speed),
        ("lead_distance", p.lead_distance),
        ("lead_speed", p.lead_speed),
        ("parked_distance", p.parked_distance),
        ("cut_out_time", p.cut_out_time),
        ("road_length", p.road_length),
    ] {
        check_non_negative(name, v)?;
    }
    for (name, v) in [
        ("lane_width", p.lane_width),
        ("vehicle_length", p.vehicle_length),
        ("vehicle_width", p.vehicle_width),
        ("cut_out_duration", p.cut_out_duration),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidScenario(format!("{name} must be positive")));
        }
    }

    let start = -50.0;
    let ego_lane = Polyline::new(vec![Vec2::new(start, 0.0), Vec2::new(p.road_length, 0.0)]);
    let left_lane = Polyline::new(vec![
        Vec2::new(start, p.lane_width),
        Vec2::new(p.road_length, p.lane_width),
    ]);
    let extent = Extent::new(p.vehicle_length, p.vehicle_width);
    let vehicle = |id: ActorId, x: f64, speed: f64, is_ego: bool| ActorState {
        id,
        class: ActorClass::Vehicle,
        pose: Pose2D::new(x, 0.0, 0.0),
        speed,
        angular_velocity: 0.0,
        extent,
        is_ego,
    };
    let actors = vec![
        vehicle(0, 0.0, p.ego_speed, true),
        vehicle(1, p.lead_distance, p.lead_speed, false),
        vehicle(2, p.parked_distance, 0.0, false),
    ];
    check_no_overlaps(&actors)?;

    let mut scripts = BTreeMap::new();
    scripts.insert(
        1,
        Script::FollowPath {
            path: ego_lane.clone(),
            s0: p.lead_distance - start,
            speed: p.lead_speed,
            looped: false,
            lane_change: Some(LaneChange {
                start_time: p.cut_out_time,
                duration: p.cut_out_duration,
                offset: p.lane_width,
            }),
        },
    );
    scripts.insert(2, Script::Stationary);

    let world = WorldState {
        time: 0.0,
        actors,
        lanes: vec![
            Lane {
                centreline: ego_lane.clone(),
                width: p.lane_width,
            },
            Lane {
                centreline: left_lane,
                width: p.lane_width,
            },
        ],
        scripts,
        route: Route {
            path: ego_lane,
            lane_width: p.lane_width,
            junctions: Vec::new(),
        },
        limits: VehicleLimits {
            max_speed: spec.limits.max_speed,
            ..spec.limits
        },
        ego_steer: 0.0,
        contacts: BTreeSet::new(),
        collisions: Vec::new(),
    };
    world.validate()?;
    Ok(world)
}

struct Grid {
    n: usize,
    block: f64,
}

impl Grid {
    fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(i as f64 * self.block, j as f64 * self.block)
    }

    fn neighbours(&self, (i, j): (usize, usize)) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push((i - 1, j));
        }
        if i + 1 < self.n {
            out.push((i + 1, j));
        }
        if j > 0 {
            out.push((i, j - 1));
        }
        if j + 1 < self.n {
            out.push((i, j + 1));
        }
        out
    }
}

pub fn build_urban_scenario<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<WorldState> {
    if spec.kind != ScenarioKind::UrbanRoutes {
        return Err(Error::InvalidScenario("expected an urban_routes scenario".into()));
    }
    spec.validate()?;
    let p = &spec.urban;
    if p.grid_nodes < 2 {
        return Err(Error::InvalidScenario("grid_nodes must be at least 2".into()));
    }
    if p.route_segments == 0 {
        return Err(Error::InvalidScenario("route_segments must be positive".into()));
    }
    for (name, v) in [("block_length", p.block_length), ("lane_width", p.lane_width)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidScenario(format!("{name} must be positive")));
        }
    }
    if p.block_length <= 4.0 * p.lane_width {
        return Err(Error::InvalidScenario(
            "block_length must exceed four lane widths".into(),
        ));
    }
    if !(p.vehicle_speed_min >= 0.0 && p.vehicle_speed_max >= p.vehicle_speed_min)
        || !(p.pedestrian_speed_min >= 0.0 && p.pedestrian_speed_max >= p.pedestrian_speed_min)
    {
        return Err(Error::InvalidScenario("invalid speed range".into()));
    }
    let grid = Grid {
        n: p.grid_nodes,
        block: p.block_length,
    };
    let half_lane = 0.5 * p.lane_width;

    let mut lanes = Vec::new();
    for i in 0..grid.n {
        for j in 0..grid.n {
            for (ni, nj) in grid.neighbours((i, j)) {
                let centre = Polyline::new(vec![grid.node(i, j), grid.node(ni, nj)]);
                lanes.push(Lane {
                    centreline: centre.offset(-half_lane),
                    width: p.lane_width,
                });
            }
        }
    }

    // Ego route: random walk without immediate U-turns.
    let mut node = (rng.random_range(0..grid.n), rng.random_range(0..grid.n));
    let mut prev: Option<(usize, usize)> = None;
    let mut nodes = vec![node];
    for _ in 0..p.route_segments {
        let options: Vec<_> = grid
            .neighbours(node)
            .into_iter()
            .filter(|n| Some(*n) != prev)
            .collect();
        let next = options[rng.random_range(0..options.len())];
        prev = Some(node);
        node = next;
        nodes.push(node);
    }
    let route_centre = Polyline::new(nodes.iter().map(|&(i, j)| grid.node(i, j)).collect());
    let route_path = route_centre.offset(-half_lane);
    let junctions: Vec<Vec2> = nodes.iter().map(|&(i, j)| grid.node(i, j)).collect();

    let vehicle_extent = Extent::new(4.5, 1.9);
    let (ego_pos, ego_heading) = route_path.sample(p.lane_width * 2.0);
    let ego = ActorState {
        id: 0,
        class: ActorClass::Vehicle,
        pose: Pose2D::new(ego_pos.x, ego_pos.y, ego_heading),
        speed: 0.0,
        angular_velocity: 0.0,
        extent: vehicle_extent,
        is_ego: true,
    };

    let mut actors = vec![ego];
    let mut scripts = BTreeMap::new();
    let mut next_id: ActorId = 1;
    let max_attempts = 1000;

    for _ in 0..p.n_vehicles {
        let mut placed = false;
        for _ in 0..max_attempts {
            let bi = rng.random_range(0..grid.n - 1);
            let bj = rng.random_range(0..grid.n - 1);
            let mut corners = vec![
                grid.node(bi, bj),
                grid.node(bi + 1, bj),
                grid.node(bi + 1, bj + 1),
                grid.node(bi, bj + 1),
            ];
            if rng.random_bool(0.5) {
                corners.reverse();
            }
            corners.push(corners[0]);
            let loop_path = Polyline::new(corners).offset(-half_lane);
            let s0 = rng.random_range(0.0..loop_path.length());
            let speed = rng.random_range(p.vehicle_speed_min..=p.vehicle_speed_max);
            let script = Script::FollowPath {
                path: loop_path,
                s0,
                speed,
                looped: true,
                lane_change: None,
            };
            let (pose, speed) = script.pose_at(0.0, Pose2D::new(0.0, 0.0, 0.0));
            let candidate = ActorState {
                id: next_id,
                class: ActorClass::Vehicle,
                pose,
                speed,
                angular_velocity: 0.0,
                extent: vehicle_extent,
                is_ego: false,
            };
            if clear_of(&candidate, &actors, 2.0) {
                actors.push(candidate);
                scripts.insert(next_id, script);
                next_id += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidScenario(
                "could not place all vehicles without overlap".into(),
            ));
        }
    }

    let ped_extent = Extent::new(0.6, 0.6);
    for _ in 0..p.n_pedestrians {
        let mut placed = false;
        for _ in 0..max_attempts {
            let i = rng.random_range(0..grid.n);
            let j = rng.random_range(0..grid.n);
            let nbrs = grid.neighbours((i, j));
            let other = nbrs[rng.random_range(0..nbrs.len())];
            let a = grid.node(i, j);
            let b = grid.node(other.0, other.1);
            let t = rng.random_range(0.25..0.75);
            let mid = a.lerp(b, t);
            let across = (b - a).perp() * (1.0 / (b - a).norm());
            let reach = p.lane_width + 3.0;
            let path = Polyline::new(vec![mid - across * reach, mid + across * reach, mid - across * reach]);
            let s0 = rng.random_range(0.0..path.length());
            let speed = rng.random_range(p.pedestrian_speed_min..=p.pedestrian_speed_max);
            let script = Script::FollowPath {
                path,
                s0,
                speed,
                looped: true,
                lane_change: None,
            };
            let (pose, speed) = script.pose_at(0.0, Pose2D::new(0.0, 0.0, 0.0));
            let candidate = ActorState {
                id: next_id,
                class: ActorClass::Pedestrian,
                pose,
                speed,
                angular_velocity: 0.0,
                extent: ped_extent,
                is_ego: false,
            };
            if clear_of(&candidate, &actors, 1.0) {
                actors.push(candidate);
                scripts.insert(next_id, script);
                next_id += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidScenario(
                "could not place all pedestrians without overlap".into(),
            ));
        }
    }

    let world = WorldState {
        time: 0.0,
        actors,
        lanes,
        scripts,
        route: Route {
            path: route_path,
            lane_width: p.lane_width,
            junctions,
        },
        limits: spec.limits,
        ego_steer: 0.0,
        contacts: BTreeSet::new(),
        collisions: Vec::new(),
    };
    world.validate()?;
    Ok(world)
}

fn clear_of(candidate: &ActorState, placed: &[ActorState], margin: f64) -> bool {
    let mut grown = candidate.bbox();
    grown.length += 2.0 * margin;
    grown.width += 2.0 * margin;
    placed.iter().all(|a| {
        // Keep clear of the ego's initial approach as well.
        let mut b = a.bbox();
        if a.is_ego {
            b.length += 20.0;
        }
        !grown.overlaps(&b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_acc_has_three_actors_and_a_parked_car() {
        let w = build_acc_scenario(&ScenarioSpec::acc()).unwrap();
        assert_eq!(w.actors.len(), 3);
        assert_eq!(w.actor(2).unwrap().speed, 0.0);
        assert!(w.ego().is_ego);
        let lead = w.actor(1).unwrap();
        let parked = w.actor(2).unwrap();
        assert!(lead.pose.x > 0.0 && parked.pose.x > lead.pose.x);
        assert_eq!(lead.pose.y, 0.0);
        assert_eq!(parked.pose.y, 0.0);
    }

    #[test]
    fn acc_trigger_time_is_passed_to_the_lead_script() {
        let mut spec = ScenarioSpec::acc();
        spec.acc.cut_out_time = 10.0;
        let w = build_acc_scenario(&spec).unwrap();
        match &w.scripts[&1] {
            Script::FollowPath { lane_change, .. } => {
                assert_eq!(lane_change.unwrap().start_time, 10.0)
            }
            other => panic!("unexpected lead script {other:?}"),
        }
    }

    #[test]
    fn overlapping_acc_actors_are_rejected() {
        let mut spec = ScenarioSpec::acc();
        spec.acc.lead_distance = 2.0;
        assert!(matches!(
            build_acc_scenario(&spec),
            Err(Error::InvalidScenario(_))
        ));
        let mut spec = ScenarioSpec::acc();
        spec.acc.parked_distance = -10.0;
        assert!(build_acc_scenario(&spec).is_err());
    }

    #[test]
    fn urban_scenario_counts_and_determinism() {
        let mut spec = ScenarioSpec::urban();
        spec.urban.n_vehicles = 20;
        let a = build_urban_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let b = build_urban_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.actors.len(), 21);

        spec.urban.n_vehicles = 0;
        let c = build_urban_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(c.actors.len(), 1);
        assert!(c.actors[0].is_ego);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        assert!(build_acc_scenario(&ScenarioSpec::urban()).is_err());
        assert!(build_urban_scenario(&ScenarioSpec::acc(), &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = ScenarioSpec::acc();
        spec.timestep = 0.0;
        assert!(spec.validate().is_err());
        let mut spec = ScenarioSpec::acc();
        spec.duration = 0.01;
        assert!(spec.validate().is_err());
    }
}
