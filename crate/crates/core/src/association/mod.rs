//! Per-frame matching of ground-truth actors to detections.

mod hungarian;

use serde::{Deserialize, Serialize};

use crate::geometry::{clip_convex, signed_area, OrientedBox};
use crate::scene::ActorClass;

pub use hungarian::hungarian;

/// Intersection over union of two oriented rectangles, in `[0, 1]`.
pub fn box_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let area_a = a.area();
    let area_b = b.area();
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let inter = signed_area(&clip_convex(&a.corners(), &b.corners())).abs();
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Outcome of matching ground truth (index space `gt`) against detections
/// (index space `det`). Every index appears exactly once overall.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_det: Vec<usize>,
}

impl Assignment {
    /// Detection index matched to ground-truth index `gt`, if any.
    pub fn det_for(&self, gt: usize) -> Option<usize> {
        self.pairs.iter().find(|(g, _)| *g == gt).map(|(_, d)| *d)
    }
}

/// A box to be matched, with its class label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelledBox {
    pub bbox: OrientedBox,
    pub class: ActorClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    /// Matches with IoU at or below this are treated as misses.
    pub iou_gate: f64,
    /// Forbid matches across classes.
    pub class_constrained: bool,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            iou_gate: 0.1,
            class_constrained: true,
        }
    }
}

/// Hungarian matching on cost `1 - IoU`, with low-overlap pairs demoted.
pub fn associate_frame(gt: &[LabelledBox], dets: &[LabelledBox], cfg: &AssociationConfig) -> Assignment {
    assert!(
        (0.0..1.0).contains(&cfg.iou_gate),
        "iou_gate must lie in [0, 1)"
    );
    let iou: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| {
            dets.iter()
                .map(|d| {
                    if cfg.class_constrained && g.class != d.class {
                        0.0
                    } else {
                        box_iou(&g.bbox, &d.bbox)
                    }
                })
                .collect()
        })
        .collect();
    let cost: Vec<Vec<f64>> = iou.iter().map(|r| r.iter().map(|v| 1.0 - v).collect()).collect();

    let mut out = Assignment::default();
    let mut gt_used = vec![false; gt.len()];
    let mut det_used = vec![false; dets.len()];
    for (g, d) in hungarian(&cost) {
        if iou[g][d] > cfg.iou_gate {
            out.pairs.push((g, d));
            gt_used[g] = true;
            det_used[d] = true;
        }
    }
    out.unmatched_gt = (0..gt.len()).filter(|&g| !gt_used[g]).collect();
    out.unmatched_det = (0..dets.len()).filter(|&d| !det_used[d]).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn unit(x: f64, y: f64) -> OrientedBox {
        OrientedBox::new(Vec2::new(x, y), 1.0, 1.0, 0.0)
    }

    fn vehicle(b: OrientedBox) -> LabelledBox {
        LabelledBox {
            bbox: b,
            class: ActorClass::Vehicle,
        }
    }

    #[test]
    fn iou_reference_cases() {
        let a = OrientedBox::new(Vec2::new(1.0, 2.0), 4.5, 1.9, 0.4);
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&unit(0.0, 0.0), &unit(3.0, 0.0)), 0.0);
        assert!((box_iou(&unit(0.0, 0.0), &unit(0.5, 0.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_detections_all_match() {
        let gt: Vec<_> = (0..4).map(|k| vehicle(unit(3.0 * k as f64, 0.0))).collect();
        let a = associate_frame(&gt, &gt, &AssociationConfig::default());
        assert_eq!(a.pairs, (0..4).map(|k| (k, k)).collect::<Vec<_>>());
        assert!(a.unmatched_gt.is_empty() && a.unmatched_det.is_empty());
    }

    #[test]
    fn no_detections_leaves_every_gt_unmatched() {
        let gt: Vec<_> = (0..3).map(|k| vehicle(unit(3.0 * k as f64, 0.0))).collect();
        let a = associate_frame(&gt, &[], &AssociationConfig::default());
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_gt, vec![0, 1, 2]);
    }

    #[test]
    fn equidistant_detection_goes_to_lower_gt_index() {
        let gt = [vehicle(unit(-0.5, 0.0)), vehicle(unit(0.5, 0.0))];
        let det = [vehicle(unit(0.0, 0.0))];
        let a = associate_frame(&gt, &det, &AssociationConfig::default());
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.unmatched_gt, vec![1]);
    }

    #[test]
    fn gate_and_class_constraint_demote_pairs() {
        let gt = [vehicle(unit(0.0, 0.0))];
        let far = [vehicle(unit(0.95, 0.0))];
        let a = associate_frame(&gt, &far, &AssociationConfig::default());
        assert!(a.pairs.is_empty());
        assert_eq!((a.unmatched_gt.len(), a.unmatched_det.len()), (1, 1));

        let ped = [LabelledBox {
            bbox: unit(0.0, 0.0),
            class: ActorClass::Pedestrian,
        }];
        assert!(associate_frame(&gt, &ped, &AssociationConfig::default()).pairs.is_empty());
        let loose = AssociationConfig {
            class_constrained: false,
            ..Default::default()
        };
        assert_eq!(associate_frame(&gt, &ped, &loose).pairs, vec![(0, 0)]);
    }
}
