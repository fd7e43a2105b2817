//! The closed loop: world, low-fidelity perception, planner, step.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::HarnessConfig;
use super::records::{TraceRecord, TRACE_VERSION};
use crate::detector::{detect, Detection, DetectorProfile, Tracker};
use crate::planners::{ControlCommand, Planner, PlannerInput};
use crate::raycast::occlusion_fractions;
use crate::scene::{build_scenario, extract_salient, step_world, SalientVector, ScenarioSpec, WorldState};
use crate::surrogates::{SurrogateKind, SurrogateModel};
use crate::{Error, Result};

/// What feeds the planner in a behaviour run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Variant {
    Detector,
    Surrogate(SurrogateKind),
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Detector,
        Variant::Surrogate(SurrogateKind::Ns),
        Variant::Surrogate(SurrogateKind::Lr),
        Variant::Surrogate(SurrogateKind::Gf),
        Variant::Surrogate(SurrogateKind::Gt),
    ];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Detector => f.write_str("detector"),
            Variant::Surrogate(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "detector" {
            Ok(Variant::Detector)
        } else {
            s.parse().map(Variant::Surrogate)
        }
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Perception stage of the loop. The detector keeps tracker state between
/// frames; surrogates are stateless.
#[derive(Debug, Clone)]
pub enum Perception<'a> {
    Detector {
        profile: &'a DetectorProfile,
        tracker: Tracker,
    },
    Surrogate(&'a SurrogateModel),
}

impl<'a> Perception<'a> {
    pub fn detector(profile: &'a DetectorProfile) -> Self {
        Perception::Detector {
            profile,
            tracker: Tracker::new(profile),
        }
    }

    pub fn perceive(
        &mut self,
        state: &WorldState,
        salients: &[SalientVector],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Detection>> {
        match self {
            Perception::Detector { profile, tracker } => {
                let mut dets = detect(salients, profile, rng);
                tracker.process(state.time, &state.ego().pose, &mut dets)?;
                Ok(dets)
            }
            Perception::Surrogate(m) => Ok(m.sample_frame(salients, rng)),
        }
    }
}

/// Per-frame wall-clock times of one run, in microseconds.
///
/// `perception_us` covers occlusion, salient extraction and the perception
/// model; `total_us` adds the planner and the world step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub perception_us: Vec<f64>,
    pub total_us: Vec<f64>,
    pub median_perception_us: f64,
    pub median_total_us: f64,
}

impl TimingRecord {
    fn finish(mut self) -> Self {
        self.median_perception_us = median(&self.perception_us);
        self.median_total_us = median(&self.total_us);
        self
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Everything visible at one step, handed to a frame observer.
pub struct FrameView<'a> {
    pub index: usize,
    pub state: &'a WorldState,
    pub salients: &'a [SalientVector],
    pub detections: &'a [Detection],
    pub command: ControlCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub timing: TimingRecord,
    /// The ego left the map and the run stopped early.
    pub truncated: bool,
}

/// Runs one closed-loop episode.
///
/// `rng` drives perception only; the scenario is built from its own seed,
/// and scripted actors never read it.
pub fn simulate(
    cfg: &HarnessConfig,
    scenario: &ScenarioSpec,
    mut perception: Perception,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(&FrameView) -> Result<()>,
) -> Result<RunOutput> {
    scenario.validate()?;
    let mut state = build_scenario(scenario)?;
    let mut planner: Planner = cfg.planner.build();
    let (lo, hi) = state.map_bounds(cfg.run.map_margin);
    let steps = scenario.steps();
    let mut records = Vec::with_capacity(steps);
    let mut timing = TimingRecord::default();
    let mut truncated = false;

    for index in 0..steps {
        let start = Instant::now();
        let occlusion = occlusion_fractions(&state, &cfg.raycast);
        let salients = extract_salient(&state, &occlusion)?;
        let detections = perception.perceive(&state, &salients, rng)?;
        let perceived = start.elapsed();

        let ego = state.ego();
        let command = planner.plan(&PlannerInput {
            ego,
            detections: &detections,
            route: &state.route,
            limits: &state.limits,
            dt: scenario.timestep,
        });
        records.push(TraceRecord {
            v: TRACE_VERSION,
            t: state.time,
            ego_pose: ego.pose,
            ego_velocity: ego.velocity(),
            ego_speed: ego.speed,
            throttle: command.throttle,
            brake: command.brake,
            steer: command.steer,
            collisions: state.collisions.clone(),
        });
        observe(&FrameView {
            index,
            state: &state,
            salients: &salients,
            detections: &detections,
            command,
        })?;
        state = step_world(&state, command, scenario.timestep);

        timing.perception_us.push(perceived.as_secs_f64() * 1e6);
        timing.total_us.push(start.elapsed().as_secs_f64() * 1e6);

        let p = state.ego().pose.position();
        if p.x < lo.x || p.y < lo.y || p.x > hi.x || p.y > hi.y {
            log::warn!("ego left the map at t={:.2}s; truncating run", state.time);
            truncated = true;
            break;
        }
    }
    Ok(RunOutput {
        records,
        timing: timing.finish(),
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn acc_config() -> HarnessConfig {
        let mut cfg = HarnessConfig {
            scenario: ScenarioSpec::acc(),
            ..Default::default()
        };
        cfg.planner.kind = super::super::config::PlannerKind::Acc;
        cfg
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("camera".parse::<Variant>().is_err());
    }

    #[test]
    fn gt_run_is_collision_free_and_reproducible() {
        let cfg = acc_config();
        let model = SurrogateModel::Gt;
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            simulate(&cfg, &cfg.scenario, Perception::Surrogate(&model), &mut rng, |_| Ok(())).unwrap()
        };
        let a = run(1);
        assert_eq!(a.records.len(), cfg.scenario.steps());
        assert!(a.records.iter().all(|r| r.collisions.is_empty()));
        assert!(!a.truncated);
        assert_eq!(a.records, run(1).records);
    }

    #[test]
    fn observer_sees_every_frame() {
        let mut cfg = acc_config();
        cfg.scenario.duration = 1.0;
        let mut seen = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        simulate(&cfg, &cfg.scenario, Perception::detector(&cfg.detector), &mut rng, |f| {
            assert_eq!(f.index, seen);
            assert_eq!(f.salients.len(), f.detections.len());
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 20);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }
}
