//! Trip reconstruction and driving-risk features from raw telemetry.
//!
//! The geometric and kinematic kernels are generic over [`Scalar`](crate::scalar::Scalar);
//! the store-level functions in `features` work on `f64`.

mod cost;
mod features;
mod geo;
mod kinematics;
mod map;
mod night;
mod overspeed;
mod segment;

use thiserror::Error;

use crate::domain::Vin;
use crate::time::Timestamp;

pub use cost::{cost_viability, CostViability, Verdict, DEFAULT_VIABILITY_THRESHOLD};
pub use features::{
    build_risk_features, gps_fixes, incident_counts, nightly_distance_from_polls, segment_vin_trips, summarize_trip,
    theft_report, trip_summaries, vin_report, write_trip_csv, AnalyticsConfig, FeatureSource, IncidentCounts,
    RiskFeatureVector, TheftReport, TripSummary, VinReport, REPORT_SCHEMA_VERSION,
};
pub use geo::{haversine_km, point_segment_km, GeoPoint, MEAN_EARTH_RADIUS_KM};
pub use kinematics::{
    compute_distance, deceleration, detect_harsh_brakes, estimate_speeds, Fix, HarshBrake, SpeedSegment,
    DEFAULT_HARSH_BRAKE_MPS2, DEFAULT_IDLE_GAP_SECS,
};
pub use map::{RoadSegment, SpeedLimitMap, DEFAULT_MATCH_RADIUS_M, MAX_LIMIT_KMH, MIN_LIMIT_KMH};
pub use night::{night_km, split_day_night, DayNightSplit};
pub use overspeed::{compute_overspeed, ClassDistance, OverspeedReport, DEFAULT_OVERSPEED_TOLERANCE_KMH};
pub use segment::{segment_trips, SegmentationConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("need at least 2 points, got {0}")]
    InsufficientPoints(usize),
    #[error("point {index} is earlier than its predecessor")]
    UnorderedPoints { index: usize },
    #[error("point {index} has the same timestamp as its predecessor")]
    ZeroTimeDelta { index: usize },
    #[error("speed-limit map has no segments")]
    EmptyMap,
    #[error("invalid speed-limit map: {0}")]
    InvalidMap(String),
    #[error("map line {line}: {detail}")]
    MapParse { line: usize, detail: String },
    #[error("no odometer reading for the poll slot at {slot}")]
    MissingSlot { slot: Timestamp },
    #[error("no trips or odometer progress in the requested period")]
    NoDataInPeriod,
    #[error("no data stored for {0}")]
    NoDataForVin(Vin),
    #[error("premium must be positive")]
    NonPositivePremium,
    #[error("data cost must be a finite non-negative amount")]
    InvalidCost,
    #[error("report output: {0}")]
    Output(String),
}

#[cfg(test)]
mod tests;
