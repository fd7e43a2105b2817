use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ActorClass, ActorId, Extent, WorldState};
use crate::geometry::{normalize_angle, Vec2};
use crate::{Error, Result};

/// Low-dimensional per-actor description in the ego frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientVector {
    pub actor_id: ActorId,
    pub rel_position: Vec2,
    pub rel_yaw: f64,
    pub speed: f64,
    pub angular_velocity: f64,
    pub extent: Extent,
    pub occlusion: f64,
    pub distance: f64,
    pub class_onehot: [f64; ActorClass::COUNT],
}

/// Names of the flattened feature columns, in order.
pub const FEATURE_NAMES: [&str; 12] = [
    "rel_x",
    "rel_y",
    "cos_rel_yaw",
    "sin_rel_yaw",
    "speed",
    "angular_velocity",
    "length",
    "width",
    "occlusion",
    "distance",
    "class_vehicle",
    "class_pedestrian",
];

pub const FEATURE_COUNT: usize = FEATURE_NAMES.len();

impl SalientVector {
    pub fn class(&self) -> ActorClass {
        ActorClass::from_one_hot(&self.class_onehot)
    }

    /// Over-ground velocity expressed along the ego axes.
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.rel_yaw) * self.speed
    }

    /// Flattened feature row; yaw enters as (cos, sin) to avoid the wrap.
    pub fn features(&self) -> [f64; FEATURE_COUNT] {
        [
            self.rel_position.x,
            self.rel_position.y,
            self.rel_yaw.cos(),
            self.rel_yaw.sin(),
            self.speed,
            self.angular_velocity,
            self.extent.length,
            self.extent.width,
            self.occlusion,
            self.distance,
            self.class_onehot[0],
            self.class_onehot[1],
        ]
    }
}

/// One salient vector per non-ego actor, in actor order.
pub fn extract_salient(
    state: &WorldState,
    occlusions: &BTreeMap<ActorId, f64>,
) -> Result<Vec<SalientVector>> {
    let ego = state.ego();
    state
        .others()
        .map(|a| {
            let occlusion = *occlusions
                .get(&a.id)
                .ok_or(Error::MissingOcclusion(a.id))?;
            let rel_position = ego.pose.to_local(a.pose.position());
            Ok(SalientVector {
                actor_id: a.id,
                rel_position,
                rel_yaw: normalize_angle(a.pose.yaw - ego.pose.yaw),
                speed: a.speed,
                angular_velocity: a.angular_velocity,
                extent: a.extent,
                occlusion: occlusion.clamp(0.0, 1.0),
                distance: rel_position.norm(),
                class_onehot: a.class.one_hot(),
            })
        })
        .collect()
}
