//! Overspeed distance from speed segments matched against a limit map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kinematics::SpeedSegment;
use super::map::SpeedLimitMap;
use super::AnalyticsError;
use crate::domain::RoadClass;
use crate::scalar::Scalar;

pub const DEFAULT_OVERSPEED_TOLERANCE_KMH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassDistance<T> {
    pub distance_km: T,
    pub overspeed_km: T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OverspeedReport<T> {
    pub overspeed_km: T,
    pub covered_km: T,
    pub uncovered_km: T,
    pub by_class: BTreeMap<RoadClass, ClassDistance<T>>,
}

/// Matches each segment's midpoint to the nearest map segment within
/// `radius_m`; a matched segment counts as overspeed when its speed exceeds
/// the limit by more than `tolerance_kmh`.
pub fn compute_overspeed<T: Scalar>(
    segments: &[SpeedSegment<T>],
    map: &SpeedLimitMap<T>,
    radius_m: f64,
    tolerance_kmh: T,
) -> Result<OverspeedReport<T>, AnalyticsError> {
    if map.is_empty() {
        return Err(AnalyticsError::EmptyMap);
    }
    let mut r = OverspeedReport { overspeed_km: T::zero(), covered_km: T::zero(), uncovered_km: T::zero(), by_class: BTreeMap::new() };
    for s in segments {
        match map.match_point(s.start.midpoint_approx(s.end), radius_m) {
            Some((road, _)) => {
                r.covered_km = r.covered_km + s.distance_km;
                let class = r.by_class.entry(road.road_class).or_insert(ClassDistance { distance_km: T::zero(), overspeed_km: T::zero() });
                class.distance_km = class.distance_km + s.distance_km;
                if s.speed_kmh > T::lit(road.limit_kmh as f64) + tolerance_kmh {
                    r.overspeed_km = r.overspeed_km + s.distance_km;
                    class.overspeed_km = class.overspeed_km + s.distance_km;
                }
            }
            None => r.uncovered_km = r.uncovered_km + s.distance_km,
        }
    }
    Ok(r)
}
