use std::f64::consts::PI;

use pemsim::detector::Detection;
use pemsim::geometry::{Polyline, Vec2};
use pemsim::planners::{AccConfig, AccPlanner, BasicAgentConfig, BasicAgentPlanner, PlannerInput};
use pemsim::scene::{ActorClass, ActorState, Extent, Pose2D, Route, VehicleLimits};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(cases)
    }
}

fn route() -> Route {
    Route {
        path: Polyline::new(vec![Vec2::new(-10.0, 0.0), Vec2::new(500.0, 0.0)]),
        lane_width: 3.5,
        junctions: vec![Vec2::new(120.0, 0.0)],
    }
}

fn ego(speed: f64) -> ActorState {
    ActorState {
        id: 0,
        class: ActorClass::Vehicle,
        pose: Pose2D::new(0.0, 0.0, 0.0),
        speed,
        angular_velocity: 0.0,
        extent: Extent::new(4.5, 1.9),
        is_ego: true,
    }
}

fn car(x: f64, y: f64, vx: f64) -> Detection {
    Detection {
        actor_id: Some(1),
        detected: true,
        position: Vec2::new(x, y),
        velocity: Some(Vec2::new(vx, 0.0)),
        yaw: 0.0,
        extent: Extent::new(4.5, 1.9),
        class: ActorClass::Vehicle,
    }
}

fn detection() -> impl Strategy<Value = Detection> {
    (-20.0..80.0, -20.0..20.0, -PI..PI, prop::option::of((-10.0..15.0, -3.0..3.0)), any::<bool>(), any::<bool>())
        .prop_map(|(x, y, yaw, v, detected, ped)| Detection {
            actor_id: Some(1),
            detected,
            position: Vec2::new(x, y),
            velocity: v.map(|(a, b)| Vec2::new(a, b)),
            yaw,
            extent: if ped { Extent::new(0.6, 0.6) } else { Extent::new(4.5, 1.9) },
            class: if ped { ActorClass::Pedestrian } else { ActorClass::Vehicle },
        })
}

fn acc_brake(speed: f64, detections: &[Detection]) -> f64 {
    let (e, r, l) = (ego(speed), route(), VehicleLimits::default());
    let mut planner = AccPlanner::new(AccConfig::default());
    planner
        .plan(&PlannerInput {
            ego: &e,
            detections,
            route: &r,
            limits: &l,
            dt: 0.05,
        })
        .brake
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn shrinking_the_gap_never_reduces_braking(
        speed in 0.0..20.0f64,
        lead_speed in 0.0..15.0f64,
        far in 5.0..60.0f64,
        shrink in 0.0..1.0f64,
    ) {
        let near = 4.6 + (far - 4.6) * shrink;
        let b_far = acc_brake(speed, &[car(far, 0.0, lead_speed)]);
        let b_near = acc_brake(speed, &[car(near, 0.0, lead_speed)]);
        prop_assert!(b_near >= b_far, "gap {} brake {} < gap {} brake {}", near, b_near, far, b_far);
    }

    #[test]
    fn obstacles_outside_the_lane_do_not_influence_acc(
        speed in 0.0..20.0f64,
        x in 5.0..60.0f64,
        lateral in 0.0..3.0f64,
        side in prop::sample::select(vec![-1.0, 1.0]),
        lead_speed in 0.0..15.0f64,
    ) {
        let y = side * (route().lane_width + 0.01 + lateral);
        let e = ego(speed);
        let (r, l) = (route(), VehicleLimits::default());
        let input = |d: &[Detection]| {
            let dets = d.to_vec();
            let mut p = AccPlanner::new(AccConfig::default());
            p.plan(&PlannerInput { ego: &e, detections: &dets, route: &r, limits: &l, dt: 0.05 })
        };
        prop_assert_eq!(input(&[car(x, y, lead_speed)]), input(&[]));
    }

    #[test]
    fn throttle_and_brake_are_exclusive(
        speed in 0.0..25.0f64,
        yaw in -0.5..0.5f64,
        dets in prop::collection::vec(detection(), 0..6),
        frames in 1usize..20,
    ) {
        let mut e = ego(speed);
        e.pose.yaw = yaw;
        let (r, l) = (route(), VehicleLimits::default());
        let mut acc = AccPlanner::new(AccConfig::default());
        let mut basic = BasicAgentPlanner::new(BasicAgentConfig::default());
        for _ in 0..frames {
            let input = PlannerInput { ego: &e, detections: &dets, route: &r, limits: &l, dt: 0.05 };
            for cmd in [acc.plan(&input), basic.plan(&input)] {
                prop_assert_eq!(cmd.throttle * cmd.brake, 0.0);
                prop_assert!((0.0..=1.0).contains(&cmd.throttle));
                prop_assert!((0.0..=1.0).contains(&cmd.brake));
                prop_assert!((-1.0..=1.0).contains(&cmd.steer));
            }
        }
    }
}
