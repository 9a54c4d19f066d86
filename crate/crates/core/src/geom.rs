//! Planar geometry primitives shared across the stack: points, poses,
//! rigid transforms, and simple-polygon helpers.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Point in the local metric frame (meters east/north of the scenario origin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &LocalPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Normalize an angle to (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Planar pose: position plus heading, heading normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> LocalPoint {
        LocalPoint::new(self.x, self.y)
    }

    /// Express `point` (given in this pose's body frame) in the parent frame.
    pub fn transform_point(&self, point: LocalPoint) -> LocalPoint {
        let (s, c) = self.theta.sin_cos();
        LocalPoint::new(
            self.x + c * point.x - s * point.y,
            self.y + s * point.x + c * point.y,
        )
    }

    /// Express `point` (given in the parent frame) in this pose's body frame.
    pub fn inverse_transform_point(&self, point: LocalPoint) -> LocalPoint {
        let (s, c) = self.theta.sin_cos();
        let dx = point.x - self.x;
        let dy = point.y - self.y;
        LocalPoint::new(c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Rigid SE(2) transform. Same parameters as a pose; kept as a separate type
/// so frame-correction transforms do not get mixed up with robot states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Transform2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn from_pose(pose: Pose2) -> Self {
        Self::new(pose.x, pose.y, pose.theta)
    }

    pub fn to_pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.theta)
    }

    /// self ∘ other: apply `other` first, then `self`.
    pub fn compose(&self, other: &Transform2) -> Transform2 {
        let (s, c) = self.theta.sin_cos();
        Transform2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Transform2 {
        let (s, c) = self.theta.sin_cos();
        Transform2::new(
            -(c * self.x + s * self.y),
            -(-s * self.x + c * self.y),
            -self.theta,
        )
    }

    pub fn apply(&self, point: LocalPoint) -> LocalPoint {
        let (s, c) = self.theta.sin_cos();
        LocalPoint::new(
            self.x + c * point.x - s * point.y,
            self.y + s * point.x + c * point.y,
        )
    }

    pub fn apply_pose(&self, pose: Pose2) -> Pose2 {
        let p = self.apply(pose.position());
        Pose2::new(p.x, p.y, pose.theta + self.theta)
    }
}

/// Signed shoelace area of a ring. Positive for counter-clockwise rings.
/// The ring may be given open (first vertex not repeated) or closed.
pub fn signed_area(ring: &[LocalPoint]) -> f64 {
    let pts = open_ring(ring);
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        sum += a.x * b.y - b.x * a.y;
    }
    0.5 * sum
}

pub fn ring_area(ring: &[LocalPoint]) -> f64 {
    signed_area(ring).abs()
}

pub fn is_ccw(ring: &[LocalPoint]) -> bool {
    signed_area(ring) > 0.0
}

/// Drop a trailing duplicate of the first vertex, if present.
pub fn open_ring(ring: &[LocalPoint]) -> &[LocalPoint] {
    if ring.len() >= 2 {
        let first = ring[0];
        let last = ring[ring.len() - 1];
        if first.dist(&last) < 1e-12 {
            return &ring[..ring.len() - 1];
        }
    }
    ring
}

/// Area centroid of a simple ring (falls back to vertex mean for degenerate rings).
pub fn ring_centroid(ring: &[LocalPoint]) -> LocalPoint {
    let pts = open_ring(ring);
    let n = pts.len();
    let a = signed_area(pts);
    if n == 0 {
        return LocalPoint::new(0.0, 0.0);
    }
    if a.abs() < 1e-12 {
        let (sx, sy) = pts
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        return LocalPoint::new(sx / n as f64, sy / n as f64);
    }
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    LocalPoint::new(cx / (6.0 * a), cy / (6.0 * a))
}

pub fn perimeter(ring: &[LocalPoint]) -> f64 {
    let pts = open_ring(ring);
    let n = pts.len();
    if n < 2 {
        return 0.0;
    }
    (0..n).map(|i| pts[i].dist(&pts[(i + 1) % n])).sum()
}

/// Even-odd point-in-polygon test. Points exactly on the boundary count as inside.
pub fn point_in_ring(p: LocalPoint, ring: &[LocalPoint]) -> bool {
    let pts = open_ring(ring);
    let n = pts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        if dist_point_segment(p, pts[i], pts[(i + 1) % n]) < 1e-9 {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (pts[i], pts[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let xint = pi.x + (p.y - pi.y) / (pj.y - pi.y) * (pj.x - pi.x);
            if p.x < xint {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Distance from point `p` to segment `ab`.
pub fn dist_point_segment(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> f64 {
    p.dist(&project_point_segment(p, a, b))
}

/// Closest point on segment `ab` to `p`.
pub fn project_point_segment(p: LocalPoint, a: LocalPoint, b: LocalPoint) -> LocalPoint {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let len2 = abx * abx + aby * aby;
    if len2 < 1e-24 {
        return a;
    }
    let t = (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0);
    LocalPoint::new(a.x + t * abx, a.y + t * aby)
}

fn orient(a: LocalPoint, b: LocalPoint, c: LocalPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Proper or touching intersection of segments `ab` and `cd`.
pub fn segments_intersect(a: LocalPoint, b: LocalPoint, c: LocalPoint, d: LocalPoint) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |o: f64, p: LocalPoint, q: LocalPoint, r: LocalPoint| {
        o.abs() < 1e-12
            && r.x >= p.x.min(q.x) - 1e-12
            && r.x <= p.x.max(q.x) + 1e-12
            && r.y >= p.y.min(q.y) - 1e-12
            && r.y <= p.y.max(q.y) + 1e-12
    };
    on(d1, c, d, a) || on(d2, c, d, b) || on(d3, a, b, c) || on(d4, a, b, d)
}

/// Intersection parameter of ray `origin + t*dir` with segment `ab`, if any,
/// for t >= 0. Returns the smallest such t.
pub fn ray_segment_intersection(
    origin: LocalPoint,
    dir: (f64, f64),
    a: LocalPoint,
    b: LocalPoint,
) -> Option<f64> {
    let (dx, dy) = dir;
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let denom = dx * ey - dy * ex;
    if denom.abs() < 1e-15 {
        return None;
    }
    let ox = a.x - origin.x;
    let oy = a.y - origin.y;
    let t = (ox * ey - oy * ex) / denom;
    let u = (ox * dy - oy * dx) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Non-adjacent edge intersection check for an open ring. O(n^2); rings here
/// are building footprints with tens of vertices.
pub fn ring_is_simple(ring: &[LocalPoint]) -> bool {
    let pts = open_ring(ring);
    let n = pts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        if a.dist(&b) < 1e-12 {
            return false;
        }
        for j in (i + 1)..n {
            // skip adjacent edges (shared vertex)
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (c, d) = (pts[j], pts[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Convex hull (monotone chain), returned counter-clockwise without a
/// repeated closing vertex.
pub fn convex_hull(points: &[LocalPoint]) -> Vec<LocalPoint> {
    let mut pts: Vec<LocalPoint> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.dist(b) < 1e-12);
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let cross = |o: LocalPoint, a: LocalPoint, b: LocalPoint| orient(o, a, b);
    let mut lower: Vec<LocalPoint> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-12
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<LocalPoint> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-12
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(side: f64) -> Vec<LocalPoint> {
        vec![
            LocalPoint::new(0.0, 0.0),
            LocalPoint::new(side, 0.0),
            LocalPoint::new(side, side),
            LocalPoint::new(0.0, side),
        ]
    }

    #[test]
    fn shoelace_square() {
        assert_relative_eq!(ring_area(&square(10.0)), 100.0, epsilon = 1e-9);
        assert!(is_ccw(&square(10.0)));
    }

    #[test]
    fn transform_round_trip() {
        let t = Transform2::new(3.0, -2.0, 1.1);
        let id = t.compose(&t.inverse());
        assert!(id.x.abs() < 1e-12 && id.y.abs() < 1e-12 && id.theta.abs() < 1e-12);
    }

    #[test]
    fn transform_compose_matches_sequential_apply() {
        let a = Transform2::new(1.0, 2.0, 0.3);
        let b = Transform2::new(-0.5, 0.25, -1.2);
        let p = LocalPoint::new(4.0, -3.0);
        let lhs = a.compose(&b).apply(p);
        let rhs = a.apply(b.apply(p));
        assert_relative_eq!(lhs.x, rhs.x, epsilon = 1e-12);
        assert_relative_eq!(lhs.y, rhs.y, epsilon = 1e-12);
    }

    #[test]
    fn angle_normalization() {
        assert_relative_eq!(
            normalize_angle(3.0 * std::f64::consts::PI),
            std::f64::consts::PI
        );
        assert_relative_eq!(normalize_angle(-std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(normalize_angle(0.5), 0.5);
    }

    #[test]
    fn point_in_ring_basics() {
        let sq = square(10.0);
        assert!(point_in_ring(LocalPoint::new(5.0, 5.0), &sq));
        assert!(point_in_ring(LocalPoint::new(0.0, 5.0), &sq)); // boundary
        assert!(!point_in_ring(LocalPoint::new(-1.0, 5.0), &sq));
    }

    #[test]
    fn simple_ring_detects_bowtie() {
        let bowtie = vec![
            LocalPoint::new(0.0, 0.0),
            LocalPoint::new(10.0, 10.0),
            LocalPoint::new(10.0, 0.0),
            LocalPoint::new(0.0, 10.0),
        ];
        assert!(!ring_is_simple(&bowtie));
        assert!(ring_is_simple(&square(1.0)));
    }

    #[test]
    fn hull_of_square_plus_interior_point() {
        let mut pts = square(4.0);
        pts.push(LocalPoint::new(2.0, 2.0));
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(is_ccw(&hull));
    }

    #[test]
    fn ray_hits_segment() {
        let t = ray_segment_intersection(
            LocalPoint::new(0.0, 0.0),
            (1.0, 0.0),
            LocalPoint::new(5.0, -1.0),
            LocalPoint::new(5.0, 1.0),
        );
        assert_relative_eq!(t.unwrap(), 5.0, epsilon = 1e-12);
        let miss = ray_segment_intersection(
            LocalPoint::new(0.0, 0.0),
            (-1.0, 0.0),
            LocalPoint::new(5.0, -1.0),
            LocalPoint::new(5.0, 1.0),
        );
        assert!(miss.is_none());
    }

    #[test]
    fn centroid_of_square() {
        let c = ring_centroid(&square(10.0));
        assert_relative_eq!(c.x, 5.0, epsilon = 1e-12);
        assert_relative_eq!(c.y, 5.0, epsilon = 1e-12);
    }
}
