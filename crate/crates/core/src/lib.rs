//! Usage-based insurance platform core: OEM consent and eligibility, a
//! deterministic OEM aggregator simulator, telemetry storage and driving-risk
//! analytics.

pub mod analytics;
pub mod consent;
pub mod domain;
pub mod eligibility;
pub mod ingestion;
pub mod quota;
pub mod scalar;
pub mod signing;
pub mod simulator;
pub mod storage;
pub mod time;
pub mod world;

/// `f64` instantiations of the generic analytics kernels.
pub type Fix = analytics::Fix<f64>;
pub type GeoPoint = analytics::GeoPoint<f64>;
pub type SpeedSegment = analytics::SpeedSegment<f64>;
pub type HarshBrake = analytics::HarshBrake<f64>;
pub type SpeedLimitMap = analytics::SpeedLimitMap<f64>;
pub type OverspeedReport = analytics::OverspeedReport<f64>;
pub type CostViability = analytics::CostViability<f64>;
