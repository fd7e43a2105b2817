//! Synthetic stand-in for an expensive object detector plus tracker.
//!
//! Detection probability is a logistic function of distance and occlusion,
//! detected positions carry distance-dependent Gaussian noise, and a
//! constant-velocity Kalman filter per actor supplies velocity estimates.

mod kalman;
mod tracker;

use std::time::Duration;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{OrientedBox, Vec2};
use crate::scene::{ActorClass, ActorId, Extent, SalientVector};
use crate::{Error, Result};

pub use kalman::{KalmanConfig, KalmanTrack};
pub use tracker::{Tracker, DEFAULT_MAX_MISSES};

/// One perception output, always in the ego frame.
///
/// `position`, `velocity` and `yaw` are meaningful only when `detected`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Ground-truth actor behind this output; `None` for false positives.
    pub actor_id: Option<ActorId>,
    pub detected: bool,
    pub position: Vec2,
    /// Over-ground velocity along the ego axes, once a track can supply it.
    pub velocity: Option<Vec2>,
    pub yaw: f64,
    pub extent: Extent,
    pub class: ActorClass,
}

impl Detection {
    /// A missed actor.
    pub fn missed(s: &SalientVector) -> Self {
        Self {
            actor_id: Some(s.actor_id),
            detected: false,
            position: s.rel_position,
            velocity: None,
            yaw: s.rel_yaw,
            extent: s.extent,
            class: s.class(),
        }
    }

    /// Exact ground truth for a salient vector.
    pub fn exact(s: &SalientVector) -> Self {
        Self {
            detected: true,
            velocity: Some(s.velocity()),
            ..Self::missed(s)
        }
    }

    pub fn bbox(&self) -> OrientedBox {
        OrientedBox::new(self.position, self.extent.length, self.extent.width, self.yaw)
    }
}

/// Parameters of the synthetic detection process.
///
/// `p(detect) = logistic(intercept + distance_coef*d + occlusion_coef*occ
/// + interaction_coef*d*occ)`, and each detected axis is perturbed with
/// standard deviation `sigma0 + sigma1*d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorProfile {
    pub intercept: f64,
    pub distance_coef: f64,
    pub occlusion_coef: f64,
    pub interaction_coef: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub kalman: KalmanConfig,
    /// Expected false positives per frame. Surrogates cannot model these.
    pub false_positive_rate: f64,
    /// Busy-wait added per frame to emulate an expensive backbone.
    pub latency_pad_us: u64,
    /// Mixed into the run seed to pick the detector's noise stream.
    pub seed: u64,
}

impl Default for DetectorProfile {
    fn default() -> Self {
        Self {
            intercept: 4.0,
            distance_coef: -0.08,
            occlusion_coef: -6.0,
            interaction_coef: 0.0,
            sigma0: 0.1,
            sigma1: 0.004,
            kalman: KalmanConfig::default(),
            false_positive_rate: 0.0,
            latency_pad_us: 0,
            seed: 0,
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DetectorProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::InvalidConfig("sigma0 must be positive".into()));
        }
        if !(self.sigma1 >= 0.0 && self.sigma1.is_finite()) {
            return Err(Error::InvalidConfig("sigma1 must be non-negative".into()));
        }
        if !(self.false_positive_rate >= 0.0 && self.false_positive_rate <= 1.0) {
            return Err(Error::InvalidConfig(
                "false_positive_rate must lie in [0, 1]".into(),
            ));
        }
        for w in [
            self.intercept,
            self.distance_coef,
            self.occlusion_coef,
            self.interaction_coef,
        ] {
            if !w.is_finite() {
                return Err(Error::InvalidConfig("miss-model coefficients must be finite".into()));
            }
        }
        self.kalman.validate()
    }

    /// Probability that an actor at `distance` with `occlusion` is detected.
    pub fn detection_probability(&self, distance: f64, occlusion: f64) -> f64 {
        logistic(
            self.intercept
                + self.distance_coef * distance
                + self.occlusion_coef * occlusion
                + self.interaction_coef * distance * occlusion,
        )
    }

    pub fn position_sigma(&self, distance: f64) -> f64 {
        self.sigma0 + self.sigma1 * distance
    }
}

/// Runs the detection process on one frame.
///
/// Each actor consumes the same number of random draws whether or not it is
/// detected, so one actor's outcome never shifts another's noise. Velocities
/// are left empty; a [`Tracker`] fills them in.
pub fn detect<R: Rng + ?Sized>(
    salients: &[SalientVector],
    profile: &DetectorProfile,
    rng: &mut R,
) -> Vec<Detection> {
    if profile.latency_pad_us > 0 {
        pad(Duration::from_micros(profile.latency_pad_us));
    }
    let mut out: Vec<Detection> = salients
        .iter()
        .map(|s| {
            let u: f64 = rng.random();
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            if u < profile.detection_probability(s.distance, s.occlusion) {
                let sigma = profile.position_sigma(s.distance);
                Detection {
                    detected: true,
                    position: s.rel_position + Vec2::new(nx, ny) * sigma,
                    ..Detection::missed(s)
                }
            } else {
                Detection::missed(s)
            }
        })
        .collect();

    if profile.false_positive_rate > 0.0 && rng.random::<f64>() < profile.false_positive_rate {
        let range = 50.0;
        out.push(Detection {
            actor_id: None,
            detected: true,
            position: Vec2::new(rng.random_range(0.0..range), rng.random_range(-range..range)),
            velocity: None,
            yaw: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            extent: Extent::new(4.5, 1.9),
            class: ActorClass::Vehicle,
        });
    }
    out
}

// Spin rather than sleep: sleeps overshoot by far more than sub-ms pads.
fn pad(d: Duration) {
    let start = std::time::Instant::now();
    while start.elapsed() < d {
        std::hint::spin_loop();
    }
}
