//! Planar geometry: vectors, angles, polylines, oriented boxes, polygons.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// 2D vector / point.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at `angle` radians from +x.
    pub fn from_angle(angle: f64) -> Self {
        Vec2::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm2(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or `fallback` when shorter than 1e-12.
    pub fn normalized_or(self, fallback: Vec2) -> Vec2 {
        let n = self.norm();
        if n < 1e-12 {
            fallback
        } else {
            Vec2::new(self.x / n, self.y / n)
        }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
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

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    -((-a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI)
}

// ---------------------------------------------------------------------------
// segments
// ---------------------------------------------------------------------------

/// Closest point on segment `ab` to `p`, with the segment parameter in [0, 1].
pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len2 = ab.norm2();
    if len2 < 1e-24 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Whether segments `p1p2` and `q1q2` intersect (touching counts).
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

// ---------------------------------------------------------------------------
// oriented bounding boxes
// ---------------------------------------------------------------------------

/// Oriented rectangle: center, unit axis along the long side, half extents.
#[derive(Copy, Clone, Debug)]
pub struct Obb {
    pub center: Vec2,
    pub axis: Vec2,
    pub half_len: f64,
    pub half_wid: f64,
}

impl Obb {
    pub fn new(center: Vec2, heading: f64, half_len: f64, half_wid: f64) -> Self {
        Obb {
            center,
            axis: Vec2::from_angle(heading),
            half_len,
            half_wid,
        }
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let u = self.axis * self.half_len;
        let v = self.axis.perp() * self.half_wid;
        [
            self.center + u + v,
            self.center + u - v,
            self.center - u - v,
            self.center - u + v,
        ]
    }
}

/// Separating-axis overlap test for two oriented rectangles.
/// Touching boxes count as overlapping. Symmetric in its arguments and
/// invariant under rigid motions applied to both boxes.
pub fn obb_overlap(a: &Obb, b: &Obb) -> bool {
    let t = b.center - a.center;
    let axes = [a.axis, a.axis.perp(), b.axis, b.axis.perp()];
    for ax in axes {
        let ra = a.half_len * a.axis.dot(ax).abs() + a.half_wid * a.axis.perp().dot(ax).abs();
        let rb = b.half_len * b.axis.dot(ax).abs() + b.half_wid * b.axis.perp().dot(ax).abs();
        if t.dot(ax).abs() > ra + rb {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// polylines
// ---------------------------------------------------------------------------

/// Result of projecting a point onto a polyline.
#[derive(Copy, Clone, Debug)]
pub struct Projection {
    /// Arc length at the closest point.
    pub s: f64,
    /// Distance from the query point to the closest point.
    pub distance: f64,
    /// The closest point itself.
    pub point: Vec2,
    /// Sign of the lateral offset: +1 left of travel direction, -1 right, 0 on the line.
    pub side: f64,
}

/// Piecewise-linear path with precomputed cumulative arc length.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Polyline {
    pts: Vec<Vec2>,
    cum: Vec<f64>,
}

impl Polyline {
    /// Build from waypoints. Requires at least two points and nonzero length.
    pub fn new(pts: Vec<Vec2>) -> crate::error::Result<Self> {
        if pts.len() < 2 {
            return Err(crate::CoreError::InvalidSpec(
                "polyline needs at least 2 points".into(),
            ));
        }
        let mut cum = Vec::with_capacity(pts.len());
        let mut s = 0.0;
        cum.push(0.0);
        for w in pts.windows(2) {
            s += w[0].dist(w[1]);
            cum.push(s);
        }
        if s < 1e-9 {
            return Err(crate::CoreError::InvalidSpec(
                "polyline has zero length".into(),
            ));
        }
        Ok(Polyline { pts, cum })
    }

    pub fn len(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Vec2] {
        &self.pts
    }

    pub fn start(&self) -> Vec2 {
        self.pts[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.pts.last().unwrap()
    }

    /// Point at arc length `s` (clamped to the path).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.len());
        let i = self.segment_index(s);
        let seg_len = self.cum[i + 1] - self.cum[i];
        if seg_len < 1e-24 {
            return self.pts[i];
        }
        let t = (s - self.cum[i]) / seg_len;
        self.pts[i] + (self.pts[i + 1] - self.pts[i]) * t
    }

    /// Unit direction of travel at arc length `s`.
    pub fn dir_at(&self, s: f64) -> Vec2 {
        let i = self.segment_index(s.clamp(0.0, self.len()));
        (self.pts[i + 1] - self.pts[i]).normalized_or(Vec2::new(1.0, 0.0))
    }

    /// Heading angle of the path at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        self.dir_at(s).angle()
    }

    fn segment_index(&self, s: f64) -> usize {
        // Last index i with cum[i] <= s, capped to a real segment.
        match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&s).expect("finite arc length"))
        {
            Ok(i) => i.min(self.pts.len() - 2),
            Err(i) => (i - 1).min(self.pts.len() - 2),
        }
    }

    /// Global nearest-point projection. Ties keep the smallest arc length,
    /// which makes the result deterministic.
    pub fn project(&self, p: Vec2) -> Projection {
        let mut best = Projection {
            s: 0.0,
            distance: f64::INFINITY,
            point: self.pts[0],
            side: 0.0,
        };
        for i in 0..self.pts.len() - 1 {
            let (q, t) = closest_on_segment(p, self.pts[i], self.pts[i + 1]);
            let d = p.dist(q);
            if d < best.distance - 1e-12 {
                let dir = (self.pts[i + 1] - self.pts[i]).normalized_or(Vec2::new(1.0, 0.0));
                let cross = dir.cross(p - q);
                best = Projection {
                    s: self.cum[i] + (self.cum[i + 1] - self.cum[i]) * t,
                    distance: d,
                    point: q,
                    side: if cross > 0.0 {
                        1.0
                    } else if cross < 0.0 {
                        -1.0
                    } else {
                        0.0
                    },
                };
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// polygons
// ---------------------------------------------------------------------------

/// Simple polygon (no self-intersection), used for junction areas.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Polygon {
    pub pts: Vec<Vec2>,
}

impl Polygon {
    pub fn rect(center: Vec2, half_x: f64, half_y: f64) -> Self {
        Polygon {
            pts: vec![
                Vec2::new(center.x - half_x, center.y - half_y),
                Vec2::new(center.x + half_x, center.y - half_y),
                Vec2::new(center.x + half_x, center.y + half_y),
                Vec2::new(center.x - half_x, center.y + half_y),
            ],
        }
    }

    /// Even-odd containment test (boundary points count as inside).
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.pts.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % n];
            if orient(a, b, p) == 0.0 && on_segment(a, b, p) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from `p` to the polygon boundary (0 if inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let n = self.pts.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let (q, _) = closest_on_segment(p, self.pts[i], self.pts[(i + 1) % n]);
            best = best.min(p.dist(q));
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(2.5 * PI) - 0.5 * PI).abs() < 1e-12);
        assert!((wrap_angle(-2.5 * PI) + 0.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn obb_touching_and_separated() {
        // Two 5x2 boxes (half 2.5/1.0) head-on along x.
        let mk = |cx: f64| Obb::new(Vec2::new(cx, 0.0), 0.0, 2.5, 1.0);
        assert!(obb_overlap(&mk(0.0), &mk(4.9)));
        assert!(!obb_overlap(&mk(0.0), &mk(5.1)));
        assert!(obb_overlap(&mk(0.0), &mk(5.0))); // exactly touching
    }

    #[test]
    fn polyline_projection_corner() {
        let pl = Polyline::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(10.0, 10.0),
        ])
        .unwrap();
        let pr = pl.project(Vec2::new(13.0, -4.0));
        assert!((pr.distance - 5.0).abs() < 1e-12);
        assert!((pr.s - 10.0).abs() < 1e-12);
        assert!((pl.len() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn polygon_contains_rect() {
        let poly = Polygon::rect(Vec2::new(0.0, 0.0), 2.0, 1.0);
        assert!(poly.contains(Vec2::new(0.0, 0.0)));
        assert!(poly.contains(Vec2::new(2.0, 1.0)));
        assert!(!poly.contains(Vec2::new(2.1, 0.0)));
        assert!((poly.distance(Vec2::new(3.0, 0.0)) - 1.0).abs() < 1e-12);
    }

    proptest! {
        // Overlap is symmetric and invariant under a rigid motion of both boxes.
        #[test]
        fn obb_overlap_symmetric_invariant(
            ax in -20.0f64..20.0, ay in -20.0f64..20.0, ah in -3.2f64..3.2,
            bx in -20.0f64..20.0, by in -20.0f64..20.0, bh in -3.2f64..3.2,
            shift_x in -50.0f64..50.0, shift_y in -50.0f64..50.0, rot in -3.2f64..3.2,
        ) {
            let a = Obb::new(Vec2::new(ax, ay), ah, 2.4, 1.0);
            let b = Obb::new(Vec2::new(bx, by), bh, 0.9, 0.3);
            let direct = obb_overlap(&a, &b);
            prop_assert_eq!(direct, obb_overlap(&b, &a));

            let shift = Vec2::new(shift_x, shift_y);
            let mv = |o: &Obb| Obb {
                center: o.center.rotated(rot) + shift,
                axis: o.axis.rotated(rot),
                half_len: o.half_len,
                half_wid: o.half_wid,
            };
            // Near-touching configurations can flip under rotation round-off;
            // only assert invariance when every separating-axis margin is clear.
            let slack = {
                let t = b.center - a.center;
                let axes = [a.axis, a.axis.perp(), b.axis, b.axis.perp()];
                axes.iter()
                    .map(|ax| {
                        let ra = a.half_len * a.axis.dot(*ax).abs()
                            + a.half_wid * a.axis.perp().dot(*ax).abs();
                        let rb = b.half_len * b.axis.dot(*ax).abs()
                            + b.half_wid * b.axis.perp().dot(*ax).abs();
                        (t.dot(*ax).abs() - (ra + rb)).abs()
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            if slack > 1e-6 {
                prop_assert_eq!(obb_overlap(&mv(&a), &mv(&b)), direct);
            }
        }

        // Projection distance is never negative and s stays within the path.
        #[test]
        fn projection_bounds(px in -50.0f64..50.0, py in -50.0f64..50.0) {
            let pl = Polyline::new(vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(10.0, 0.0),
                Vec2::new(10.0, 10.0),
                Vec2::new(30.0, 10.0),
            ]).unwrap();
            let pr = pl.project(Vec2::new(px, py));
            prop_assert!(pr.distance >= 0.0);
            prop_assert!(pr.s >= 0.0 && pr.s <= pl.len());
        }
    }
}
