//! Planar primitives: vectors, rectangles, simple polygons and the
//! segment/point predicates the simulator and planner are built on.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or displacement in world pixels. The y axis points north.
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

    /// Unit vector at `angle` radians counter-clockwise from +x.
    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or zero for the zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec2::ZERO
        }
    }

    /// Divides by `max(|self|, floor)`: unit length far out, linear near zero.
    pub fn soft_normalized(self, floor: f64) -> Vec2 {
        self / self.norm().max(floor)
    }

    /// Rescales to at most `max_len`, keeping direction.
    pub fn clamp_norm(self, max_len: f64) -> Vec2 {
        let n = self.norm();
        if n > max_len && n > 0.0 {
            self * (max_len / n)
        } else {
            self
        }
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
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

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl std::iter::Sum for Vec2 {
    fn sum<I: Iterator<Item = Vec2>>(iter: I) -> Vec2 {
        iter.fold(Vec2::ZERO, Add::add)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn from_size(width: f64, height: f64) -> Self {
        Self::new(Vec2::ZERO, Vec2::new(width, height))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    /// Distance from an interior point to the nearest side, and that side's
    /// closest point. Sides are ordered west, east, south, north.
    pub fn wall_distances(&self, p: Vec2) -> [(f64, Vec2); 4] {
        [
            (p.x - self.min.x, Vec2::new(self.min.x, p.y)),
            (self.max.x - p.x, Vec2::new(self.max.x, p.y)),
            (p.y - self.min.y, Vec2::new(p.x, self.min.y)),
            (self.max.y - p.y, Vec2::new(p.x, self.max.y)),
        ]
    }
}

/// Orientation of the triple (a, b, c): positive when counter-clockwise.
pub fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test; touching endpoints and collinear
/// overlap count as intersecting.
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

/// Parameter `t` along `p1 + t (p2 - p1)` where the segment meets `q1 q2`,
/// if the two segments cross or touch.
pub fn segment_hit_param(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> Option<f64> {
    if !segments_intersect(p1, p2, q1, q2) {
        return None;
    }
    let r = p2 - p1;
    let s = q2 - q1;
    let denom = r.cross(s);
    if denom.abs() < 1e-12 {
        // Collinear overlap: first contact is the nearer of the q endpoints.
        let rr = r.norm_sq();
        if rr == 0.0 {
            return Some(0.0);
        }
        let t1 = (q1 - p1).dot(r) / rr;
        let t2 = (q2 - p1).dot(r) / rr;
        return Some(t1.min(t2).clamp(0.0, 1.0));
    }
    Some(((q1 - p1).cross(s) / denom).clamp(0.0, 1.0))
}

/// Closest point to `p` on the closed segment `a b`.
pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

/// A simple (non-self-intersecting) polygon given by its vertex loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        Self { vertices }
    }

    /// Rectangle with half extents `(hw, hh)` rotated by `angle` about `center`.
    pub fn rotated_rect(center: Vec2, hw: f64, hh: f64, angle: f64) -> Self {
        let corners = [
            Vec2::new(-hw, -hh),
            Vec2::new(hw, -hh),
            Vec2::new(hw, hh),
            Vec2::new(-hw, hh),
        ];
        Self::new(corners.iter().map(|c| center + c.rotate(angle)).collect())
    }

    pub fn square(center: Vec2, side: f64, angle: f64) -> Self {
        Self::rotated_rect(center, side * 0.5, side * 0.5, angle)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bbox(&self) -> Rect {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        Rect::new(min, max)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        self.vertices.iter().copied().sum::<Vec2>() / n
    }

    pub fn translated(&self, offset: Vec2) -> Polygon {
        Polygon::new(self.vertices.iter().map(|v| *v + offset).collect())
    }

    /// Even-odd ray cast. Points exactly on the boundary may go either way;
    /// use [`Polygon::distance`] when the boundary matters.
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from `p` to the polygon boundary and the closest boundary point.
    pub fn closest_boundary_point(&self, p: Vec2) -> (f64, Vec2) {
        let mut best = (f64::INFINITY, p);
        for (a, b) in self.edges() {
            let c = closest_point_on_segment(p, a, b);
            let d = p.distance(c);
            if d < best.0 {
                best = (d, c);
            }
        }
        best
    }

    /// Distance from `p` to the polygon as a solid region (0 inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.closest_boundary_point(p).0
        }
    }

    /// True when the closed segment touches the closed polygon region.
    pub fn intersects_segment(&self, p: Vec2, q: Vec2) -> bool {
        let sb = Rect::new(
            Vec2::new(p.x.min(q.x), p.y.min(q.y)),
            Vec2::new(p.x.max(q.x), p.y.max(q.y)),
        );
        if !sb.intersects(&self.bbox()) {
            return false;
        }
        if self.edges().any(|(a, b)| segments_intersect(p, q, a, b)) {
            return true;
        }
        // No boundary crossing: the segment is either wholly inside or outside.
        self.contains(p)
    }

    /// Twice the signed area; positive for counter-clockwise loops.
    pub fn signed_area2(&self) -> f64 {
        self.edges().map(|(a, b)| a.cross(b)).sum()
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_and_touching_segments() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(10.0, 10.0);
        assert!(segments_intersect(a, b, Vec2::new(0.0, 10.0), Vec2::new(10.0, 0.0)));
        // endpoint touch
        assert!(segments_intersect(a, b, b, Vec2::new(20.0, 0.0)));
        // parallel, disjoint
        assert!(!segments_intersect(a, b, Vec2::new(1.0, 0.0), Vec2::new(11.0, 10.0)));
        // collinear overlap
        assert!(segments_intersect(a, b, Vec2::new(5.0, 5.0), Vec2::new(15.0, 15.0)));
        // collinear, disjoint
        assert!(!segments_intersect(a, b, Vec2::new(11.0, 11.0), Vec2::new(15.0, 15.0)));
    }

    #[test]
    fn hit_param_on_crossing() {
        let t = segment_hit_param(
            Vec2::new(0.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(4.0, -1.0),
            Vec2::new(4.0, 1.0),
        )
        .unwrap();
        assert!((t - 0.4).abs() < 1e-12);
    }

    #[test]
    fn square_contains_and_distance() {
        let sq = Polygon::square(Vec2::new(5.0, 5.0), 4.0, 0.0);
        assert!(sq.contains(Vec2::new(5.0, 5.0)));
        assert!(!sq.contains(Vec2::new(8.0, 5.0)));
        assert!((sq.distance(Vec2::new(10.0, 5.0)) - 3.0).abs() < 1e-12);
        assert_eq!(sq.distance(Vec2::new(5.5, 5.0)), 0.0);
        assert!(sq.is_simple());
        assert!(sq.signed_area2() > 0.0);
    }

    #[test]
    fn segment_wholly_inside_polygon_intersects() {
        let sq = Polygon::square(Vec2::new(0.0, 0.0), 10.0, 0.3);
        assert!(sq.intersects_segment(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.5)));
        assert!(!sq.intersects_segment(Vec2::new(20.0, 0.0), Vec2::new(30.0, 0.5)));
    }

    #[test]
    fn bowtie_is_not_simple() {
        let p = Polygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ]);
        assert!(!p.is_simple());
    }

    #[test]
    fn soft_normalize_is_linear_near_zero() {
        let v = Vec2::new(0.3, 0.4);
        assert_eq!(v.soft_normalized(1.0), v);
        let w = Vec2::new(3.0, 4.0).soft_normalized(1.0);
        assert!((w.norm() - 1.0).abs() < 1e-12);
    }
}
