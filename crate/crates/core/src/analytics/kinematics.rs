//! Distance, speed and harsh-brake estimation over timestamped fixes.

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::geo::{haversine_km, GeoPoint};
use super::AnalyticsError;
use crate::scalar::Scalar;
use crate::time::{self, Timestamp};

pub const DEFAULT_IDLE_GAP_SECS: i64 = 300;
pub const DEFAULT_HARSH_BRAKE_MPS2: f64 = 3.5;

/// A timestamped GPS position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fix<T> {
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
    pub pos: GeoPoint<T>,
}

impl<T: Scalar> Fix<T> {
    pub fn new(at: Timestamp, lat: T, lon: T) -> Self {
        Self { at, pos: GeoPoint::new(lat, lon) }
    }
}

/// Sum of great-circle distances between consecutive fixes.
pub fn compute_distance<T: Scalar>(points: &[Fix<T>]) -> Result<T, AnalyticsError> {
    if points.len() < 2 {
        return Err(AnalyticsError::InsufficientPoints(points.len()));
    }
    let mut total = T::zero();
    for (i, w) in points.windows(2).enumerate() {
        if w[1].at < w[0].at {
            return Err(AnalyticsError::UnorderedPoints { index: i + 1 });
        }
        total = total + haversine_km(w[0].pos, w[1].pos);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSegment<T> {
    #[serde(with = "time::rfc3339")]
    pub from: Timestamp,
    #[serde(with = "time::rfc3339")]
    pub to: Timestamp,
    pub start: GeoPoint<T>,
    pub end: GeoPoint<T>,
    pub distance_km: T,
    pub speed_kmh: T,
}

impl<T: Scalar> SpeedSegment<T> {
    pub fn seconds(&self) -> T {
        T::lit((self.to - self.from).num_milliseconds() as f64 / 1000.0)
    }

    /// Midpoint instant.
    pub fn mid(&self) -> Timestamp {
        self.from + (self.to - self.from) / 2
    }
}

/// Per-segment speeds; segments spanning more than `idle_gap` are left out.
pub fn estimate_speeds<T: Scalar>(points: &[Fix<T>], idle_gap: Duration) -> Result<Vec<SpeedSegment<T>>, AnalyticsError> {
    if points.len() < 2 {
        return Err(AnalyticsError::InsufficientPoints(points.len()));
    }
    let mut out = Vec::with_capacity(points.len() - 1);
    for (i, w) in points.windows(2).enumerate() {
        let dt = w[1].at - w[0].at;
        if dt < Duration::zero() {
            return Err(AnalyticsError::UnorderedPoints { index: i + 1 });
        }
        if dt.is_zero() {
            return Err(AnalyticsError::ZeroTimeDelta { index: i + 1 });
        }
        if dt > idle_gap {
            continue;
        }
        let d = haversine_km(w[0].pos, w[1].pos);
        let hours = T::lit(dt.num_milliseconds() as f64 / 3_600_000.0);
        out.push(SpeedSegment { from: w[0].at, to: w[1].at, start: w[0].pos, end: w[1].pos, distance_km: d, speed_kmh: d / hours });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarshBrake<T> {
    /// Start of the first segment driven at the reduced speed.
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
    pub peak_decel_mps2: T,
    /// Number of qualifying consecutive segment pairs merged into this event.
    pub pairs: usize,
}

/// Deceleration between consecutive, contiguous segments, in m/s².
pub fn deceleration<T: Scalar>(a: &SpeedSegment<T>, b: &SpeedSegment<T>) -> Option<T> {
    if a.to != b.from {
        return None;
    }
    let dt = T::lit((b.mid() - a.mid()).num_milliseconds() as f64 / 1000.0);
    if dt <= T::zero() {
        return None;
    }
    Some((a.speed_kmh - b.speed_kmh) / T::lit(3.6) / dt)
}

/// Harsh-brake events.
///
/// An event is a maximal run of contiguous decelerating segment pairs that
/// contains at least one pair at or above `threshold_mps2`. Adjacent qualifying
/// pairs therefore merge, and raising the threshold can only drop events.
pub fn detect_harsh_brakes<T: Scalar>(speeds: &[SpeedSegment<T>], threshold_mps2: T) -> Vec<HarshBrake<T>> {
    let mut events: Vec<HarshBrake<T>> = Vec::new();
    let mut in_run = false;
    let mut run_has_event = false;
    for w in speeds.windows(2) {
        match deceleration(&w[0], &w[1]) {
            Some(d) if d > T::zero() => {
                if !in_run {
                    in_run = true;
                    run_has_event = false;
                }
                if d >= threshold_mps2 {
                    if run_has_event {
                        let e = events.last_mut().expect("run already produced an event");
                        e.pairs += 1;
                        e.peak_decel_mps2 = e.peak_decel_mps2.max(d);
                    } else {
                        events.push(HarshBrake { at: w[1].from, peak_decel_mps2: d, pairs: 1 });
                        run_has_event = true;
                    }
                }
            }
            _ => in_run = false,
        }
    }
    events
}
