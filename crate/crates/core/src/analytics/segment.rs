//! Splitting a GPS series into trips.

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::geo::haversine_km;
use super::kinematics::{compute_distance, Fix, DEFAULT_IDLE_GAP_SECS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub idle_gap_secs: i64,
    /// A vehicle staying within this radius for `idle_gap_secs` is parked.
    pub dwell_radius_m: f64,
    pub min_trip_km: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { idle_gap_secs: DEFAULT_IDLE_GAP_SECS, dwell_radius_m: 50.0, min_trip_km: 0.1 }
    }
}

/// Trips as half-open index ranges into `points`.
///
/// A trip ends when the gap to the next fix exceeds the idle gap, or when the
/// vehicle stays within the dwell radius of one fix for at least the idle gap.
/// Trips with fewer than two fixes or shorter than `min_trip_km` are dropped.
pub fn segment_trips<T: Scalar>(points: &[Fix<T>], cfg: &SegmentationConfig) -> Vec<std::ops::Range<usize>> {
    let idle = Duration::seconds(cfg.idle_gap_secs);
    let radius_km = T::lit(cfg.dwell_radius_m / 1000.0);
    let mut raw: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < points.len() {
        if i + 1 < points.len() && points[i + 1].at - points[i].at > idle {
            raw.push(start..i + 1);
            start = i + 1;
            i += 1;
            continue;
        }
        // Furthest fix still inside the dwell radius of fix i, without idle gaps.
        let mut j = i;
        while j + 1 < points.len()
            && points[j + 1].at - points[j].at <= idle
            && haversine_km(points[i].pos, points[j + 1].pos) <= radius_km
        {
            j += 1;
        }
        if j > i && points[j].at - points[i].at >= idle {
            raw.push(start..i + 1);
            start = j;
            i = j;
            continue;
        }
        i += 1;
    }
    if start < points.len() {
        raw.push(start..points.len());
    }
    raw.into_iter()
        .filter(|r| r.len() >= 2)
        .filter(|r| compute_distance(&points[r.clone()]).map(|d| d.as_f64() >= cfg.min_trip_km).unwrap_or(false))
        .collect()
}
