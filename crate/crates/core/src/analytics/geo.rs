//! Spherical geometry on the mean Earth radius.

use serde::{Deserialize, Serialize};

use crate::domain::Position;
use crate::scalar::Scalar;

pub const MEAN_EARTH_RADIUS_KM: f64 = 6371.0088;

/// Latitude and longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoPoint<T> {
    pub lat: T,
    pub lon: T,
}

impl<T: Scalar> GeoPoint<T> {
    pub fn new(lat: T, lon: T) -> Self {
        Self { lat, lon }
    }

    pub fn from_position(p: Position) -> Self {
        Self { lat: T::lit(p.lat), lon: T::lit(p.lon) }
    }

    pub fn to_position(self) -> Position {
        Position::new(self.lat.as_f64(), self.lon.as_f64())
    }

    pub fn midpoint_approx(self, other: Self) -> Self {
        let two = T::lit(2.0);
        Self { lat: (self.lat + other.lat) / two, lon: (self.lon + other.lon) / two }
    }
}

/// Great-circle distance by the haversine formula.
pub fn haversine_km<T: Scalar>(a: GeoPoint<T>, b: GeoPoint<T>) -> T {
    let two = T::lit(2.0);
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / two).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / two).sin().powi(2);
    two * T::lit(MEAN_EARTH_RADIUS_KM) * h.sqrt().min(T::one()).asin()
}

/// Distance from `p` to the segment `a`-`b`, on a plane tangent at `p`.
/// Accurate for the short ranges used by map matching.
pub fn point_segment_km<T: Scalar>(p: GeoPoint<T>, a: GeoPoint<T>, b: GeoPoint<T>) -> T {
    let r = T::lit(MEAN_EARTH_RADIUS_KM);
    let k = p.lat.to_radians().cos();
    let project = |q: GeoPoint<T>| ((q.lon - p.lon).to_radians() * k * r, (q.lat - p.lat).to_radians() * r);
    let (ax, ay) = project(a);
    let (bx, by) = project(b);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > T::zero() { (-(ax * dx + ay * dy) / len2).max(T::zero()).min(T::one()) } else { T::zero() };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    (cx * cx + cy * cy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_meridian_distance() {
        // Δlat 0.009° along a meridian: 0.009 × π/180 × 6371.0088 km.
        let expected = 0.009f64.to_radians() * 6371.0088;
        let d = haversine_km(GeoPoint::new(49.6, 6.12), GeoPoint::new(49.609, 6.12));
        assert!((d - expected).abs() < 1e-9);
        assert!((d - 1.0007).abs() < 1e-4);
        let d32 = haversine_km(GeoPoint::<f32>::new(49.6, 6.12), GeoPoint::new(49.609, 6.12));
        assert!((d32 as f64 - expected).abs() < 1e-3);
    }

    #[test]
    fn identical_points_are_zero_apart() {
        let p = GeoPoint::new(49.6, 6.12);
        assert_eq!(haversine_km(p, p), 0.0);
    }

    #[test]
    fn point_to_segment() {
        let a = GeoPoint::new(49.6, 6.12);
        let b = GeoPoint::new(49.61, 6.12);
        // 0.0004° of longitude east of the meridian segment.
        let p = GeoPoint::new(49.605, 6.1204);
        let expected = 0.0004f64.to_radians() * 49.605f64.to_radians().cos() * MEAN_EARTH_RADIUS_KM;
        assert!((point_segment_km(p, a, b) - expected).abs() < 1e-9);
        // Beyond the end the distance is to the endpoint.
        let q = GeoPoint::new(49.62, 6.12);
        assert!((point_segment_km(q, a, b) - haversine_km(q, b)).abs() < 1e-5);
    }
}
