//! Exploration mode: when the map lacks the target entrance, walk the
//! building perimeter and look for the door.
//!
//! The pipeline is outer boundary (concave hull for multi-part buildings),
//! outward inflation to a collision-free search band, uniform perimeter
//! sampling into centroid-facing waypoints, and a sequential door search
//! over those waypoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    self, convex_hull, normalize_angle, point_in_ring, ring_is_simple, LocalPoint, Pose2,
};
use crate::osm::{ElementRef, GeoPoint};

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("boundary needs at least 3 distinct points, got {0}")]
    Degenerate(usize),
    #[error("polygon offset by {0} m produced a self-intersecting ring")]
    OffsetFailed(f64),
    #[error("inflation margin must be positive, got {0}")]
    BadMargin(f64),
    #[error("waypoint spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("motion failed: {0}")]
    Motion(String),
}

/// Inflated search area around a building footprint. Ring is simple, CCW,
/// and contains the source footprint entirely.
#[derive(Debug, Clone)]
pub struct SearchPolygon {
    pub ring: Vec<LocalPoint>,
    pub source: Option<ElementRef>,
    pub margin: f64,
}

/// A perimeter waypoint with a heading facing the building centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: LocalPoint,
    pub heading: f64,
}

/// Ordered search waypoints around the inflated perimeter.
#[derive(Debug, Clone)]
pub struct WaypointRing {
    pub waypoints: Vec<Waypoint>,
    pub spacing: f64,
    pub cursor: usize,
}

impl WaypointRing {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

/// A sensed door plate: house number, unit, and where it is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorObservation {
    pub house_number: String,
    pub unit: String,
    pub position: GeoPoint,
    pub confidence: f64,
}

/// Door-plate sensing contract. The simulator provides the implementation;
/// only doors within the sensor's range and field of view may be reported.
pub trait DoorSensor {
    fn detect(&mut self, pose: &Pose2) -> Vec<DoorObservation>;
}

/// Outcome of a perimeter door search.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found {
        observation: DoorObservation,
        waypoint_index: usize,
    },
    Exhausted {
        waypoints_visited: usize,
    },
}

fn dedup_points(points: &[LocalPoint]) -> Vec<LocalPoint> {
    let mut out: Vec<LocalPoint> = Vec::with_capacity(points.len());
    for &p in points {
        if !out.iter().any(|q| q.dist(&p) < 1e-9) {
            out.push(p);
        }
    }
    out
}

/// Single outer boundary of a building given as one or more rings.
///
/// One part returns that ring normalized counter-clockwise. Multiple parts
/// are merged with a k-nearest-neighbors concave hull, growing k from 3
/// until the hull is simple and encloses every vertex; the convex hull is
/// the k = n endpoint of that ladder.
pub fn outer_boundary(parts: &[Vec<LocalPoint>]) -> Result<Vec<LocalPoint>, ExploreError> {
    let mut all: Vec<LocalPoint> = Vec::new();
    for part in parts {
        all.extend_from_slice(geom::open_ring(part));
    }
    let points = dedup_points(&all);
    if points.len() < 3 {
        return Err(ExploreError::Degenerate(points.len()));
    }
    if parts.len() == 1 {
        let mut ring = dedup_points(geom::open_ring(&parts[0]));
        if ring.len() < 3 || !ring_is_simple(&ring) {
            return Err(ExploreError::Degenerate(ring.len()));
        }
        if !geom::is_ccw(&ring) {
            ring.reverse();
        }
        return Ok(ring);
    }
    for k in 3..points.len() {
        if let Some(hull) = knn_concave_hull(&points, k) {
            if ring_is_simple(&hull) && points.iter().all(|p| point_in_ring(*p, &hull)) {
                let mut hull = hull;
                if !geom::is_ccw(&hull) {
                    hull.reverse();
                }
                return Ok(hull);
            }
        }
    }
    let mut hull = convex_hull(&points);
    if hull.len() < 3 {
        return Err(ExploreError::Degenerate(hull.len()));
    }
    if !geom::is_ccw(&hull) {
        hull.reverse();
    }
    Ok(hull)
}

/// k-nearest-neighbors concave hull walk. Returns None when the walk gets
/// stuck (every candidate edge would cross the hull) so the caller can
/// retry with a larger k.
fn knn_concave_hull(points: &[LocalPoint], k: usize) -> Option<Vec<LocalPoint>> {
    let n = points.len();
    if k >= n {
        return Some(convex_hull(points));
    }
    let start_idx = (0..n)
        .min_by(|&a, &b| {
            points[a]
                .y
                .total_cmp(&points[b].y)
                .then(points[a].x.total_cmp(&points[b].x))
        })
        .unwrap();
    let start = points[start_idx];
    let mut hull = vec![start];
    let mut available: Vec<LocalPoint> = points
        .iter()
        .copied()
        .enumerate()
        .filter(|(i, _)| *i != start_idx)
        .map(|(_, p)| p)
        .collect();
    let mut current = start;
    // fake predecessor to the left makes the first sweep pick the
    // rightmost/lowest direction, starting a counter-clockwise walk
    let mut forward = 0.0_f64;

    for _ in 0..(2 * n) {
        let close_allowed = hull.len() >= 3;
        let mut candidates: Vec<LocalPoint> = Vec::with_capacity(k + 1);
        let mut pool = available.clone();
        pool.sort_by(|a, b| {
            current
                .dist(a)
                .total_cmp(&current.dist(b))
                .then(a.x.total_cmp(&b.x))
                .then(a.y.total_cmp(&b.y))
        });
        candidates.extend(pool.into_iter().take(k));
        if close_allowed {
            candidates.push(start);
        }
        if candidates.is_empty() {
            return None;
        }
        // counter-clockwise sweep from the forward direction, smallest first
        let sweep = |p: &LocalPoint| {
            let a = (p.y - current.y).atan2(p.x - current.x);
            let mut s = a - forward;
            while s < 1e-12 {
                s += 2.0 * std::f64::consts::PI;
            }
            s
        };
        candidates.sort_by(|a, b| {
            sweep(a)
                .total_cmp(&sweep(b))
                .then(current.dist(a).total_cmp(&current.dist(b)))
        });

        let mut chosen: Option<LocalPoint> = None;
        'cand: for cand in &candidates {
            let closing = cand.dist(&start) < 1e-12;
            // skip edges that would cross the hull walked so far
            let last = hull.len() - 1;
            for j in 0..last.saturating_sub(1) {
                if closing && j == 0 {
                    continue;
                }
                if geom::segments_intersect(current, *cand, hull[j], hull[j + 1]) {
                    continue 'cand;
                }
            }
            chosen = Some(*cand);
            break;
        }
        let next = chosen?;
        if next.dist(&start) < 1e-12 {
            return Some(hull);
        }
        forward = (next.y - current.y).atan2(next.x - current.x);
        available.retain(|p| p.dist(&next) >= 1e-12);
        hull.push(next);
        current = next;
    }
    None
}

/// Outward offset of a simple polygon by `margin` meters.
///
/// Vertices move along angle-bisector normals with a miter limit of 2;
/// corners beyond the limit are beveled. If the mitered ring
/// self-intersects the offset is retried with bevel joins everywhere.
pub fn inflate(
    ring: &[LocalPoint],
    margin: f64,
    source: Option<ElementRef>,
) -> Result<SearchPolygon, ExploreError> {
    if margin <= 0.0 {
        return Err(ExploreError::BadMargin(margin));
    }
    let mut pts = dedup_points(geom::open_ring(ring));
    if pts.len() < 3 || !ring_is_simple(&pts) {
        return Err(ExploreError::Degenerate(pts.len()));
    }
    if !geom::is_ccw(&pts) {
        pts.reverse();
    }

    let mitered = offset_ring(&pts, margin, true);
    let ring_ok = |r: &Vec<LocalPoint>| r.len() >= 3 && ring_is_simple(r);
    let offset = if ring_ok(&mitered) {
        mitered
    } else {
        let beveled = offset_ring(&pts, margin, false);
        if ring_ok(&beveled) {
            beveled
        } else {
            return Err(ExploreError::OffsetFailed(margin));
        }
    };
    Ok(SearchPolygon {
        ring: offset,
        source,
        margin,
    })
}

fn offset_ring(pts: &[LocalPoint], margin: f64, allow_miter: bool) -> Vec<LocalPoint> {
    const MITER_LIMIT: f64 = 2.0;
    let n = pts.len();
    let mut out = Vec::with_capacity(n + 4);
    for i in 0..n {
        let prev = pts[(i + n - 1) % n];
        let v = pts[i];
        let next = pts[(i + 1) % n];
        // outward (right-hand) normals of the two incident edges of a CCW ring
        let n1 = edge_normal(prev, v);
        let n2 = edge_normal(v, next);
        let dot = (n1.0 * n2.0 + n1.1 * n2.1).clamp(-1.0, 1.0);
        let denom = 1.0 + dot;
        let miter_ratio = if denom > 1e-12 {
            (2.0 / denom).sqrt()
        } else {
            f64::INFINITY
        };
        if allow_miter && miter_ratio <= MITER_LIMIT {
            let bx = (n1.0 + n2.0) / denom;
            let by = (n1.1 + n2.1) / denom;
            out.push(LocalPoint::new(v.x + margin * bx, v.y + margin * by));
        } else {
            out.push(LocalPoint::new(v.x + margin * n1.0, v.y + margin * n1.1));
            out.push(LocalPoint::new(v.x + margin * n2.0, v.y + margin * n2.1));
        }
    }
    dedup_points(&out)
}

fn edge_normal(a: LocalPoint, b: LocalPoint) -> (f64, f64) {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len = dx.hypot(dy).max(1e-12);
    (dy / len, -dx / len)
}

/// Uniform arc-length sampling of the search perimeter into waypoints that
/// face the footprint centroid. The walk starts at the ring vertex nearest
/// the robot and proceeds counter-clockwise.
pub fn sample_waypoints(
    polygon: &SearchPolygon,
    spacing: f64,
    centroid: LocalPoint,
    robot: LocalPoint,
) -> Result<WaypointRing, ExploreError> {
    if spacing <= 0.0 {
        return Err(ExploreError::BadSpacing(spacing));
    }
    let ring = &polygon.ring;
    let n = ring.len();
    if n < 3 {
        return Err(ExploreError::Degenerate(n));
    }
    let perimeter = geom::perimeter(ring);
    let count = ((perimeter / spacing).floor() as usize).max(1);
    let interval = perimeter / count as f64;

    let start_idx = (0..n)
        .min_by(|&a, &b| {
            robot
                .dist(&ring[a])
                .total_cmp(&robot.dist(&ring[b]))
                .then(a.cmp(&b))
        })
        .unwrap();

    let heading_to_centroid = |p: LocalPoint| normalize_angle((centroid.y - p.y).atan2(centroid.x - p.x));

    let mut waypoints = Vec::with_capacity(count);
    let mut next_at = 0.0_f64;
    let mut walked = 0.0_f64;
    let mut emitted = 0usize;
    for step in 0..n {
        let a = ring[(start_idx + step) % n];
        let b = ring[(start_idx + step + 1) % n];
        let seg = a.dist(&b);
        // emit every waypoint whose arc offset falls on this edge
        while emitted < count && next_at <= walked + seg + 1e-9 {
            let t = if seg < 1e-12 {
                0.0
            } else {
                ((next_at - walked) / seg).clamp(0.0, 1.0)
            };
            let p = LocalPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            waypoints.push(Waypoint {
                position: p,
                heading: heading_to_centroid(p),
            });
            emitted += 1;
            next_at += interval;
        }
        walked += seg;
        if emitted >= count {
            break;
        }
    }
    Ok(WaypointRing {
        waypoints,
        spacing,
        cursor: 0,
    })
}

/// Visit waypoints in order, querying the door sensor at each, until an
/// observation matches the target address or the ring is exhausted.
///
/// A match must agree on house number (and unit, when the target has one)
/// after normalization and carry confidence of at least 0.5.
pub fn search_door<S, M>(
    ring: &WaypointRing,
    sensor: &mut S,
    target: &crate::osm::Address,
    mut motion: M,
) -> Result<SearchOutcome, ExploreError>
where
    S: DoorSensor,
    M: FnMut(&Waypoint) -> Result<Pose2, ExploreError>,
{
    let want_house = target.building.as_deref().map(crate::osm::normalize_token);
    let want_unit = target.unit.as_deref().map(crate::osm::normalize_token);
    for (visited, wp) in ring.waypoints.iter().enumerate() {
        let pose = motion(wp)?;
        for obs in sensor.detect(&pose) {
            if obs.confidence < 0.5 {
                continue;
            }
            let house_ok = want_house
                .as_deref()
                .map(|w| crate::osm::normalize_token(&obs.house_number) == w)
                .unwrap_or(true);
            let unit_ok = want_unit
                .as_deref()
                .map(|w| crate::osm::normalize_token(&obs.unit) == w)
                .unwrap_or(true);
            if house_ok && unit_ok {
                return Ok(SearchOutcome::Found {
                    observation: obs,
                    waypoint_index: visited,
                });
            }
        }
    }
    Ok(SearchOutcome::Exhausted {
        waypoints_visited: ring.waypoints.len(),
    })
}
