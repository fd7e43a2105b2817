//! Occlusion fractions from a low-resolution planar ray fan.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geometry::{OrientedBox, Vec2};
use crate::scene::{ActorId, Pose2D, WorldState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RayFanConfig {
    pub ray_count: usize,
    /// Full azimuthal span in radians, centred on the sensor heading.
    pub fov: f64,
    pub max_range: f64,
    /// Sensor mount relative to the ego pose.
    pub sensor_offset: Pose2D,
}

impl Default for RayFanConfig {
    fn default() -> Self {
        // Quarter-degree spacing: a car end-on at 30 m still spans about a
        // dozen rays, so a one-ray quantisation step stays near 0.01.
        Self {
            ray_count: 1440,
            fov: TAU,
            max_range: 100.0,
            sensor_offset: Pose2D::new(0.9, 0.0, 0.0),
        }
    }
}

impl RayFanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ray_count == 0 {
            return Err(Error::InvalidConfig("ray_count must be at least 1".into()));
        }
        if !(self.fov > 0.0 && self.fov <= TAU) {
            return Err(Error::InvalidConfig("fov must lie in (0, 2pi]".into()));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::InvalidConfig("max_range must be positive".into()));
        }
        Ok(())
    }

    /// Direction of ray `i` relative to the sensor heading.
    pub fn ray_angle(&self, i: usize) -> f64 {
        -0.5 * self.fov + (i as f64 + 0.5) * self.fov / self.ray_count as f64
    }
}

/// Distance along a unit-direction ray to where it enters `rect`, or `None`.
///
/// A ray starting inside the rectangle hits at distance 0.
pub fn ray_rect_intersect(origin: Vec2, direction: Vec2, rect: &OrientedBox) -> Option<f64> {
    let slab = Slab::new(rect);
    slab.hit(origin, direction)
}

/// Rectangle pre-transformed for repeated slab tests.
#[derive(Debug, Clone, Copy)]
struct Slab {
    centre: Vec2,
    cos: f64,
    sin: f64,
    half_length: f64,
    half_width: f64,
}

impl Slab {
    fn new(rect: &OrientedBox) -> Self {
        let (sin, cos) = rect.yaw.sin_cos();
        Self {
            centre: rect.centre,
            cos,
            sin,
            half_length: 0.5 * rect.length,
            half_width: 0.5 * rect.width,
        }
    }

    fn hit(&self, origin: Vec2, direction: Vec2) -> Option<f64> {
        let rel = origin - self.centre;
        let ox = self.cos * rel.x + self.sin * rel.y;
        let oy = -self.sin * rel.x + self.cos * rel.y;
        let dx = self.cos * direction.x + self.sin * direction.y;
        let dy = -self.sin * direction.x + self.cos * direction.y;

        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        for (o, d, h) in [(ox, dx, self.half_length), (oy, dy, self.half_width)] {
            if d.abs() < 1e-15 {
                if o.abs() > h {
                    return None;
                }
            } else {
                let inv = 1.0 / d;
                let (t0, t1) = {
                    let a = (-h - o) * inv;
                    let b = (h - o) * inv;
                    if a < b {
                        (a, b)
                    } else {
                        (b, a)
                    }
                };
                t_enter = t_enter.max(t0);
                t_exit = t_exit.min(t1);
            }
        }
        if t_exit < t_enter.max(0.0) {
            None
        } else {
            Some(t_enter.max(0.0))
        }
    }
}

/// Per-ray outcome counts behind an occlusion fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RayCounts {
    /// Rays that would reach the actor if it were alone in the scene.
    pub unobstructed: usize,
    /// Rays whose first hit is the actor.
    pub first_hit: usize,
}

impl RayCounts {
    pub fn occlusion(&self) -> f64 {
        if self.unobstructed == 0 {
            1.0
        } else {
            1.0 - self.first_hit as f64 / self.unobstructed as f64
        }
    }
}

/// Ray tallies for every non-ego actor.
pub fn ray_counts(state: &WorldState, cfg: &RayFanConfig) -> BTreeMap<ActorId, RayCounts> {
    let ego = state.ego();
    let sensor = ego.pose.compose(&cfg.sensor_offset);
    let origin = sensor.position();

    let mut targets: Vec<(ActorId, Slab)> = state
        .others()
        .map(|a| (a.id, Slab::new(&a.bbox())))
        .collect();
    targets.sort_by_key(|(id, _)| *id);
    let mut counts = vec![RayCounts::default(); targets.len()];

    for i in 0..cfg.ray_count {
        let direction = Vec2::from_angle(sensor.yaw + cfg.ray_angle(i));
        let mut first: Option<(usize, f64)> = None;
        for (k, (_, slab)) in targets.iter().enumerate() {
            if let Some(t) = slab.hit(origin, direction) {
                if t <= cfg.max_range {
                    counts[k].unobstructed += 1;
                    // Strict comparison: ties go to the lower id.
                    if first.is_none_or(|(_, best)| t < best) {
                        first = Some((k, t));
                    }
                }
            }
        }
        if let Some((k, _)) = first {
            counts[k].first_hit += 1;
        }
    }

    targets
        .into_iter()
        .zip(counts)
        .map(|((id, _), c)| (id, c))
        .collect()
}

/// Occlusion fraction of every non-ego actor.
///
/// The fraction is taken relative to the rays that would reach the actor in
/// isolation, so an unobstructed actor in range has occlusion 0 and an actor
/// reached by no ray at all has occlusion 1.
pub fn occlusion_fractions(state: &WorldState, cfg: &RayFanConfig) -> BTreeMap<ActorId, f64> {
    ray_counts(state, cfg)
        .into_iter()
        .map(|(id, c)| (id, c.occlusion()))
        .collect()
}
