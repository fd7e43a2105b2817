//! Planar geometry shared by the simulator, ray caster and association code.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    // rem_euclid maps -pi to pi already; this only guards the open lower end.
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    /// Left-hand normal.
    pub fn perp(self) -> Self {
        Self {
            x: -self.y,
            y: self.x,
        }
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Self {
        self + (o - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A rectangle with arbitrary heading. `length` runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub centre: Vec2,
    pub length: f64,
    pub width: f64,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(centre: Vec2, length: f64, width: f64, yaw: f64) -> Self {
        Self {
            centre,
            length,
            width,
            yaw,
        }
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let hl = self.length * 0.5;
        let hw = self.width * 0.5;
        let (s, c) = self.yaw.sin_cos();
        let ax = Vec2::new(c, s);
        let ay = Vec2::new(-s, c);
        [
            self.centre + ax * hl + ay * -hw,
            self.centre + ax * hl + ay * hw,
            self.centre + ax * -hl + ay * hw,
            self.centre + ax * -hl + ay * -hw,
        ]
    }

    /// Expresses a world point in the box frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.centre).rotate(-self.yaw)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.length * 0.5 && l.y.abs() <= self.width * 0.5
    }

    /// Separating-axis overlap test. Touching boxes count as overlapping.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let ca = self.corners();
        let cb = other.corners();
        let axes = [
            Vec2::from_angle(self.yaw),
            Vec2::from_angle(self.yaw).perp(),
            Vec2::from_angle(other.yaw),
            Vec2::from_angle(other.yaw).perp(),
        ];
        for axis in axes {
            let (amin, amax) = project_onto(&ca, axis);
            let (bmin, bmax) = project_onto(&cb, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }
}

fn project_onto(points: &[Vec2], axis: Vec2) -> (f64, f64) {
    points
        .iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Signed shoelace area; positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.cross(b);
    }
    0.5 * acc
}

/// Sutherland-Hodgman clipping of `subject` by the convex CCW polygon `clip`.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output: Vec<Vec2> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let inside = |p: Vec2| edge.cross(p - a) >= 0.0;
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, edge));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, edge));
            }
        }
    }
    output
}

fn segment_line_intersection(p: Vec2, q: Vec2, a: Vec2, edge: Vec2) -> Vec2 {
    let d = q - p;
    let denom = edge.cross(d);
    if denom == 0.0 {
        return q;
    }
    let t = edge.cross(a - p) / denom;
    p + d * t.clamp(0.0, 1.0)
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point.
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel.
    pub lateral: f64,
    pub point: Vec2,
    pub heading: f64,
}

/// An open or closed chain of points with precomputed arc lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl From<Vec<Vec2>> for Polyline {
    fn from(points: Vec<Vec2>) -> Self {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Vec2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc += (*p - points[i - 1]).norm();
            }
            cumulative.push(acc);
        }
        Self { points, cumulative }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn is_closed(&self) -> bool {
        self.points.len() > 2 && self.points.first() == self.points.last()
    }

    fn segment_at(&self, s: f64) -> usize {
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(self.points.len().saturating_sub(2)),
            Err(i) => i.saturating_sub(1).min(self.points.len().saturating_sub(2)),
        }
    }

    /// Point and heading at arc length `s`, clamped to the ends.
    pub fn sample(&self, s: f64) -> (Vec2, f64) {
        match self.points.len() {
            0 => (Vec2::ZERO, 0.0),
            1 => (self.points[0], 0.0),
            _ => {
                let s = s.clamp(0.0, self.length());
                let i = self.segment_at(s);
                let a = self.points[i];
                let b = self.points[i + 1];
                let seg = self.cumulative[i + 1] - self.cumulative[i];
                let t = if seg > 0.0 {
                    (s - self.cumulative[i]) / seg
                } else {
                    0.0
                };
                let d = b - a;
                (a.lerp(b, t), d.y.atan2(d.x))
            }
        }
    }

    pub fn project(&self, p: Vec2) -> Projection {
        let mut best = Projection {
            s: 0.0,
            lateral: f64::INFINITY,
            point: self.points.first().copied().unwrap_or(Vec2::ZERO),
            heading: 0.0,
        };
        let mut best_d2 = f64::INFINITY;
        for i in 0..self.points.len().saturating_sub(1) {
            let a = self.points[i];
            let b = self.points[i + 1];
            let d = b - a;
            let len2 = d.norm_squared();
            let t = if len2 > 0.0 {
                ((p - a).dot(d) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = a + d * t;
            let d2 = (p - q).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                let heading = d.y.atan2(d.x);
                let lateral_sign = if d.cross(p - a) >= 0.0 { 1.0 } else { -1.0 };
                best = Projection {
                    s: self.cumulative[i] + t * len2.sqrt(),
                    lateral: lateral_sign * d2.sqrt(),
                    point: q,
                    heading,
                };
            }
        }
        best
    }

    /// Projection restricted to arc lengths in `[s_min, s_max]`.
    pub fn project_window(&self, p: Vec2, s_min: f64, s_max: f64) -> Option<Projection> {
        let mut best: Option<Projection> = None;
        let mut best_d2 = f64::INFINITY;
        for i in 0..self.points.len().saturating_sub(1) {
            if self.cumulative[i + 1] < s_min || self.cumulative[i] > s_max {
                continue;
            }
            let a = self.points[i];
            let b = self.points[i + 1];
            let d = b - a;
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let t_lo = ((s_min - self.cumulative[i]) / len).max(0.0);
            let t_hi = ((s_max - self.cumulative[i]) / len).min(1.0);
            let t = ((p - a).dot(d) / (len * len)).clamp(t_lo, t_hi);
            let q = a + d * t;
            let d2 = (p - q).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                let lateral_sign = if d.cross(p - a) >= 0.0 { 1.0 } else { -1.0 };
                best = Some(Projection {
                    s: self.cumulative[i] + t * len,
                    lateral: lateral_sign * d2.sqrt(),
                    point: q,
                    heading: d.y.atan2(d.x),
                });
            }
        }
        best
    }

    /// Copy shifted sideways by `offset` (positive to the left).
    pub fn offset(&self, offset: f64) -> Polyline {
        let n = self.points.len();
        if n < 2 {
            return self.clone();
        }
        let closed = self.is_closed();
        let seg_normal = |i: usize| -> Vec2 {
            let d = self.points[i + 1] - self.points[i];
            let len = d.norm();
            if len == 0.0 {
                Vec2::ZERO
            } else {
                d.perp() * (1.0 / len)
            }
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (prev, next) = if closed && (i == 0 || i == n - 1) {
                (seg_normal(n - 2), seg_normal(0))
            } else if i == 0 {
                (seg_normal(0), seg_normal(0))
            } else if i == n - 1 {
                (seg_normal(n - 2), seg_normal(n - 2))
            } else {
                (seg_normal(i - 1), seg_normal(i))
            };
            // Miter join keeps straight segments at exactly `offset`.
            let bis = prev + next;
            let bis_len2 = bis.norm_squared();
            let shift = if bis_len2 < 1e-12 {
                next * offset
            } else {
                let cos_half = bis.dot(next) / bis_len2.sqrt();
                bis * (offset / (bis_len2.sqrt() * cos_half.max(0.2)))
            };
            out.push(self.points[i] + shift);
        }
        Polyline::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_wraps_into_half_open_interval() {
        assert!((normalize_angle(PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sat_overlap_is_symmetric_for_rotated_boxes() {
        let a = OrientedBox::new(Vec2::new(0.0, 0.0), 4.0, 2.0, 0.3);
        let b = OrientedBox::new(Vec2::new(3.2, 1.5), 4.0, 2.0, -0.9);
        let c = OrientedBox::new(Vec2::new(9.0, 0.0), 4.0, 2.0, 0.0);
        assert_eq!(a.overlaps(&b), b.overlaps(&a));
        assert!(!a.overlaps(&c));
        assert!(!c.overlaps(&a));
        assert!(a.overlaps(&a));
    }

    #[test]
    fn clipping_two_offset_squares() {
        let a = OrientedBox::new(Vec2::new(0.0, 0.0), 1.0, 1.0, 0.0).corners();
        let b = OrientedBox::new(Vec2::new(0.5, 0.0), 1.0, 1.0, 0.0).corners();
        let inter = clip_convex(&a, &b);
        assert!((signed_area(&inter) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polyline_projection_and_offset() {
        let line = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)]);
        assert_eq!(line.length(), 20.0);
        let p = line.project(Vec2::new(4.0, 1.5));
        assert!((p.s - 4.0).abs() < 1e-12);
        assert!((p.lateral - 1.5).abs() < 1e-12);
        let right = line.offset(-2.0);
        assert_eq!(right.points()[0], Vec2::new(0.0, -2.0));
        assert!((right.points()[1].x - 12.0).abs() < 1e-9);
        assert!((right.points()[1].y + 2.0).abs() < 1e-9);
        let (pt, heading) = line.sample(15.0);
        assert_eq!(pt, Vec2::new(10.0, 5.0));
        assert!((heading - PI / 2.0).abs() < 1e-12);
    }
}
