//! Speed-limit map and nearest-segment matching.
//!
//! Text format, one road segment per line:
//!
//! ```text
//! # id      limit_kmh  road_class  vertices (lat,lon ...)
//! rue-1     50         urban       49.600000,6.120000 49.604500,6.120000
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Limits lie in
//! 20..=130 km/h and every segment needs at least two distinct vertices.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geo::{haversine_km, point_segment_km, GeoPoint};
use super::AnalyticsError;
use crate::domain::RoadClass;
use crate::scalar::Scalar;

pub const MIN_LIMIT_KMH: u32 = 20;
pub const MAX_LIMIT_KMH: u32 = 130;
pub const DEFAULT_MATCH_RADIUS_M: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment<T> {
    pub id: String,
    pub limit_kmh: u32,
    pub road_class: RoadClass,
    pub polyline: Vec<GeoPoint<T>>,
}

impl<T: Scalar> RoadSegment<T> {
    pub fn length_km(&self) -> T {
        self.polyline.windows(2).map(|w| haversine_km(w[0], w[1])).sum()
    }

    pub fn distance_km(&self, p: GeoPoint<T>) -> T {
        self.polyline
            .windows(2)
            .map(|w| point_segment_km(p, w[0], w[1]))
            .fold(T::infinity(), |a, b| a.min(b))
    }

    fn bbox(&self) -> (GeoPoint<T>, GeoPoint<T>) {
        let mut lo = self.polyline[0];
        let mut hi = self.polyline[0];
        for p in &self.polyline {
            lo = GeoPoint::new(lo.lat.min(p.lat), lo.lon.min(p.lon));
            hi = GeoPoint::new(hi.lat.max(p.lat), hi.lon.max(p.lon));
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedLimitMap<T> {
    segments: Vec<RoadSegment<T>>,
    boxes: Vec<(GeoPoint<T>, GeoPoint<T>)>,
}

impl<T: Scalar> SpeedLimitMap<T> {
    pub fn new(segments: Vec<RoadSegment<T>>) -> Result<Self, AnalyticsError> {
        for s in &segments {
            if !(MIN_LIMIT_KMH..=MAX_LIMIT_KMH).contains(&s.limit_kmh) {
                return Err(AnalyticsError::InvalidMap(format!("{}: limit {} outside 20..=130", s.id, s.limit_kmh)));
            }
            if s.polyline.len() < 2 || s.length_km() <= T::zero() {
                return Err(AnalyticsError::InvalidMap(format!("{}: degenerate polyline", s.id)));
            }
        }
        let boxes = segments.iter().map(|s| s.bbox()).collect();
        Ok(Self { segments, boxes })
    }

    pub fn segments(&self) -> &[RoadSegment<T>] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Nearest segment within `radius_m` of `p`.
    pub fn match_point(&self, p: GeoPoint<T>, radius_m: f64) -> Option<(&RoadSegment<T>, T)> {
        let radius_km = T::lit(radius_m / 1000.0);
        // Twice the radius in degrees, for the bounding-box prefilter.
        let lat_margin = T::lit(2.0 * radius_m / 1000.0 / 111.0);
        let lon_margin = lat_margin / p.lat.to_radians().cos().max(T::lit(0.01));
        let mut best: Option<(&RoadSegment<T>, T)> = None;
        for (seg, (lo, hi)) in self.segments.iter().zip(&self.boxes) {
            let outside_lat = p.lat < lo.lat - lat_margin || p.lat > hi.lat + lat_margin;
            let outside_lon = p.lon < lo.lon - lon_margin || p.lon > hi.lon + lon_margin;
            if outside_lat || outside_lon {
                continue;
            }
            let d = seg.distance_km(p);
            if d <= radius_km && best.is_none_or(|(_, b)| d < b) {
                best = Some((seg, d));
            }
        }
        best
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# id limit_kmh road_class vertices\n");
        for s in &self.segments {
            let _ = write!(out, "{} {} {}", s.id, s.limit_kmh, s.road_class.as_str());
            for p in &s.polyline {
                let _ = write!(out, " {:.6},{:.6}", p.lat.as_f64(), p.lon.as_f64());
            }
            out.push('\n');
        }
        out
    }
}

impl<T: Scalar> FromStr for SpeedLimitMap<T> {
    type Err = AnalyticsError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut segments = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |detail: String| AnalyticsError::MapParse { line: n + 1, detail };
            let mut fields = line.split_whitespace();
            let id = fields.next().ok_or_else(|| bad("missing id".into()))?.to_string();
            let limit_kmh = fields
                .next()
                .ok_or_else(|| bad("missing limit".into()))?
                .parse::<u32>()
                .map_err(|e| bad(format!("limit: {e}")))?;
            let road_class = fields.next().ok_or_else(|| bad("missing road class".into()))?.parse().map_err(bad)?;
            let mut polyline = Vec::new();
            for v in fields {
                let (lat, lon) = v.split_once(',').ok_or_else(|| bad(format!("vertex {v:?} is not lat,lon")))?;
                let lat: f64 = lat.parse().map_err(|e| bad(format!("latitude {lat:?}: {e}")))?;
                let lon: f64 = lon.parse().map_err(|e| bad(format!("longitude {lon:?}: {e}")))?;
                if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                    return Err(bad(format!("vertex {v:?} out of range")));
                }
                polyline.push(GeoPoint::new(T::lit(lat), T::lit(lon)));
            }
            segments.push(RoadSegment { id, limit_kmh, road_class, polyline });
        }
        Self::new(segments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# test map
rue-1 50 urban 49.600000,6.120000 49.604500,6.120000
n7    90 rural 49.604500,6.120000 49.650000,6.130000 49.700000,6.130000
";

    #[test]
    fn parses_and_round_trips() {
        let m: SpeedLimitMap<f64> = SAMPLE.parse().unwrap();
        assert_eq!(m.segments().len(), 2);
        assert_eq!(m.segments()[1].polyline.len(), 3);
        let again: SpeedLimitMap<f64> = m.to_text().parse().unwrap();
        assert_eq!(again.segments(), m.segments());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!("a 10 urban 1,1 2,2".parse::<SpeedLimitMap<f64>>(), Err(AnalyticsError::InvalidMap(_))));
        assert!(matches!("a 50 urban 1,1 1,1".parse::<SpeedLimitMap<f64>>(), Err(AnalyticsError::InvalidMap(_))));
        assert!(matches!("a 50 urban 1,1".parse::<SpeedLimitMap<f64>>(), Err(AnalyticsError::InvalidMap(_))));
        assert!(matches!("a 50 alley 1,1 2,2".parse::<SpeedLimitMap<f64>>(), Err(AnalyticsError::MapParse { line: 1, .. })));
        assert!(matches!("\n\na x urban".parse::<SpeedLimitMap<f64>>(), Err(AnalyticsError::MapParse { line: 3, .. })));
        assert!(matches!("a 50 urban 1;1 2,2".parse::<SpeedLimitMap<f64>>(), Err(AnalyticsError::MapParse { .. })));
    }

    #[test]
    fn matches_within_radius_only() {
        let m: SpeedLimitMap<f64> = SAMPLE.parse().unwrap();
        let near = GeoPoint::new(49.602, 6.1202);
        let (seg, d) = m.match_point(near, DEFAULT_MATCH_RADIUS_M).unwrap();
        assert_eq!(seg.id, "rue-1");
        assert!(d < 0.030);
        let far = GeoPoint::new(49.602, 6.125);
        assert!(m.match_point(far, DEFAULT_MATCH_RADIUS_M).is_none());
    }
}
