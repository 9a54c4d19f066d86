//! WGS84 coordinates and the equirectangular local tangent projection.
//!
//! The projection is exact enough at campus scale (sub-centimeter within a
//! few kilometers of the origin) and trivially invertible, which keeps
//! round-trips lossless for the benchmark fixtures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::LocalPoint;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Maximum distance from the projection origin for which we accept points.
pub const MAX_PROJECTION_RANGE_M: f64 = 50_000.0;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("latitude {0} out of range [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} out of range [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("point is {0:.0} m from origin, beyond the {1:.0} m projection range")]
    OutOfRange(f64, f64),
}

/// Geographic coordinate in degrees (WGS84).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn validate(&self) -> Result<(), ProjectionError> {
        if !(-90.0..=90.0).contains(&self.lat) || !self.lat.is_finite() {
            return Err(ProjectionError::LatitudeOutOfRange(self.lat));
        }
        if !(-180.0..=180.0).contains(&self.lon) || !self.lon.is_finite() {
            return Err(ProjectionError::LongitudeOutOfRange(self.lon));
        }
        Ok(())
    }
}

/// Geographic bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl GeoBounds {
    pub fn empty() -> Self {
        Self {
            min_lat: f64::INFINITY,
            min_lon: f64::INFINITY,
            max_lat: f64::NEG_INFINITY,
            max_lon: f64::NEG_INFINITY,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min_lat > self.max_lat || self.min_lon > self.max_lon
    }

    pub fn expand(&mut self, p: GeoPoint) {
        self.min_lat = self.min_lat.min(p.lat);
        self.max_lat = self.max_lat.max(p.lat);
        self.min_lon = self.min_lon.min(p.lon);
        self.max_lon = self.max_lon.max(p.lon);
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint::new(
            0.5 * (self.min_lat + self.max_lat),
            0.5 * (self.min_lon + self.max_lon),
        )
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn intersects(&self, other: &GeoBounds) -> bool {
        !(self.is_empty() || other.is_empty())
            && self.min_lat <= other.max_lat
            && self.max_lat >= other.min_lat
            && self.min_lon <= other.max_lon
            && self.max_lon >= other.min_lon
    }
}

/// Project `point` into the local east/north frame centered at `origin`.
pub fn project(point: GeoPoint, origin: GeoPoint) -> Result<LocalPoint, ProjectionError> {
    point.validate()?;
    origin.validate()?;
    let rad = std::f64::consts::PI / 180.0;
    let x = (point.lon - origin.lon) * rad * EARTH_RADIUS_M * (origin.lat * rad).cos();
    let y = (point.lat - origin.lat) * rad * EARTH_RADIUS_M;
    let dist = x.hypot(y);
    if dist >= MAX_PROJECTION_RANGE_M {
        return Err(ProjectionError::OutOfRange(dist, MAX_PROJECTION_RANGE_M));
    }
    Ok(LocalPoint::new(x, y))
}

/// Inverse of [`project`].
pub fn unproject(point: LocalPoint, origin: GeoPoint) -> Result<GeoPoint, ProjectionError> {
    origin.validate()?;
    let rad = std::f64::consts::PI / 180.0;
    let lat = origin.lat + point.y / (rad * EARTH_RADIUS_M);
    let lon = origin.lon + point.x / (rad * EARTH_RADIUS_M * (origin.lat * rad).cos());
    Ok(GeoPoint::new(lat, lon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    const ORIGIN: GeoPoint = GeoPoint {
        lat: 39.94,
        lon: 116.35,
    };

    #[test]
    fn origin_projects_to_zero() {
        let p = project(ORIGIN, ORIGIN).unwrap();
        assert_eq!(p.x, 0.0);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn millidegree_north_is_arc_length() {
        // 0.001 deg * pi/180 * mean Earth radius
        let p = project(GeoPoint::new(ORIGIN.lat + 0.001, ORIGIN.lon), ORIGIN).unwrap();
        assert_relative_eq!(p.y, 111.194926645, epsilon = 1e-6);
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = GeoPoint::new(
                ORIGIN.lat + rng.gen_range(-0.2..0.2),
                ORIGIN.lon + rng.gen_range(-0.2..0.2),
            );
            let local = project(p, ORIGIN).unwrap();
            let back = unproject(local, ORIGIN).unwrap();
            assert!((back.lat - p.lat).abs() < 1e-9);
            assert!((back.lon - p.lon).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_latitude() {
        let err = project(GeoPoint::new(99.0, 0.0), GeoPoint::new(0.0, 0.0)).unwrap_err();
        assert_eq!(err, ProjectionError::LatitudeOutOfRange(99.0));
    }

    #[test]
    fn rejects_far_points() {
        let err = project(GeoPoint::new(10.0, 0.0), GeoPoint::new(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, ProjectionError::OutOfRange(_, _)));
    }
}
