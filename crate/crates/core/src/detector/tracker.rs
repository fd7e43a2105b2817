use std::collections::BTreeMap;

use nalgebra::Matrix2;

use super::{Detection, DetectorProfile, KalmanConfig, KalmanTrack};
use crate::scene::{ActorId, Pose2D};
use crate::Result;

/// Consecutive missed frames after which a track is dropped.
pub const DEFAULT_MAX_MISSES: usize = 5;

#[derive(Debug, Clone)]
struct Entry {
    track: KalmanTrack,
    misses: usize,
}

/// Per-actor Kalman tracks that turn position detections into velocities.
///
/// Tracks live in the world frame so that ego motion does not leak into the
/// estimate; velocities are handed back as over-ground vectors along the ego
/// axes. A track needs two measurements before it reports a velocity.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: KalmanConfig,
    sigma0: f64,
    sigma1: f64,
    max_misses: usize,
    tracks: BTreeMap<ActorId, Entry>,
}

impl Tracker {
    pub fn new(profile: &DetectorProfile) -> Self {
        Self::with_max_misses(profile, DEFAULT_MAX_MISSES)
    }

    pub fn with_max_misses(profile: &DetectorProfile, max_misses: usize) -> Self {
        Self {
            cfg: profile.kalman.clone(),
            sigma0: profile.sigma0,
            sigma1: profile.sigma1,
            max_misses: max_misses.max(1),
            tracks: BTreeMap::new(),
        }
    }

    pub fn track(&self, id: ActorId) -> Option<&KalmanTrack> {
        self.tracks.get(&id).map(|e| &e.track)
    }

    /// Consumes one frame of detections taken at `time` from `ego` and fills
    /// in `velocity` for every detected, tracked actor.
    pub fn process(&mut self, time: f64, ego: &Pose2D, detections: &mut [Detection]) -> Result<()> {
        let mut seen = Vec::new();
        for det in detections.iter_mut() {
            let Some(id) = det.actor_id else { continue };
            if !det.detected {
                continue;
            }
            seen.push(id);
            let world = ego.to_world(det.position);
            let std = self
                .cfg
                .measurement_std
                .unwrap_or(self.sigma0 + self.sigma1 * det.position.norm());
            let next = match self.tracks.get(&id) {
                Some(e) => {
                    let dt = (time - e.track.last_update).max(0.0);
                    let r = Matrix2::identity() * (std * std);
                    e.track.predict(dt)?.update(world, r, time)?
                }
                None => KalmanTrack::new(id, world, std, time, &self.cfg),
            };
            det.velocity = (next.updates >= 2).then(|| next.velocity().rotate(-ego.yaw));
            self.tracks.insert(id, Entry { track: next, misses: 0 });
        }
        let max_misses = self.max_misses;
        self.tracks.retain(|id, e| {
            if seen.contains(id) {
                true
            } else {
                e.misses += 1;
                e.misses < max_misses
            }
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::scene::{ActorClass, Extent};

    fn det(id: ActorId, position: Vec2, detected: bool) -> Detection {
        Detection {
            actor_id: Some(id),
            detected,
            position,
            velocity: None,
            yaw: 0.0,
            extent: Extent::new(4.5, 1.9),
            class: ActorClass::Vehicle,
        }
    }

    fn profile() -> DetectorProfile {
        DetectorProfile {
            kalman: KalmanConfig {
                measurement_std: Some(0.05),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn velocity_converges_for_persistent_detections() {
        let mut tracker = Tracker::new(&profile());
        let dt = 0.05;
        let mut last = None;
        for k in 0..100 {
            let t = k as f64 * dt;
            // Ego drives at 5 m/s; the actor moves at 2 m/s over ground.
            let ego = Pose2D::new(5.0 * t, 0.0, 0.0);
            let actor = Vec2::new(20.0 + 2.0 * t, 3.0);
            let mut frame = [det(1, ego.to_local(actor), true)];
            tracker.process(t, &ego, &mut frame).unwrap();
            if k == 0 {
                assert!(frame[0].velocity.is_none());
            }
            last = frame[0].velocity;
        }
        assert!((last.unwrap() - Vec2::new(2.0, 0.0)).norm() < 0.05);
    }

    #[test]
    fn never_detected_emits_nothing() {
        let mut tracker = Tracker::new(&profile());
        for k in 0..10 {
            let mut frame = [det(1, Vec2::new(10.0, 0.0), false)];
            tracker.process(k as f64 * 0.05, &Pose2D::new(0.0, 0.0, 0.0), &mut frame).unwrap();
            assert!(frame[0].velocity.is_none());
        }
        assert!(tracker.track(1).is_none());
    }

    #[test]
    fn long_gap_reinitialises_the_track() {
        let ego = Pose2D::new(0.0, 0.0, 0.0);
        let mut tracker = Tracker::new(&profile());
        let mut t = 0.0;
        for _ in 0..10 {
            tracker.process(t, &ego, &mut [det(1, Vec2::new(10.0, 0.0), true)]).unwrap();
            t += 0.05;
        }
        let settled = tracker.track(1).unwrap().covariance;
        for k in 0..DEFAULT_MAX_MISSES {
            tracker.process(t, &ego, &mut [det(1, Vec2::new(10.0, 0.0), false)]).unwrap();
            t += 0.05;
            assert_eq!(tracker.track(1).is_some(), k + 1 < DEFAULT_MAX_MISSES);
        }
        let mut frame = [det(1, Vec2::new(10.0, 0.0), true)];
        tracker.process(t, &ego, &mut frame).unwrap();
        let fresh = tracker.track(1).unwrap();
        assert_eq!(fresh.updates, 1);
        assert!(fresh.covariance[(2, 2)] > settled[(2, 2)]);
        assert!(frame[0].velocity.is_none());
    }
}
