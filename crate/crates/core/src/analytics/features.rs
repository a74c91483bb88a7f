//! Trip summaries, risk features, theft report and poll-based night distance
//! computed from the time-series store.

use std::io::Write;

use chrono::{Days, Duration, NaiveDate};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::kinematics::{detect_harsh_brakes, estimate_speeds, Fix};
use super::map::{SpeedLimitMap, DEFAULT_MATCH_RADIUS_M};
use super::night::split_day_night;
use super::overspeed::{compute_overspeed, DEFAULT_OVERSPEED_TOLERANCE_KMH};
use super::segment::{segment_trips, SegmentationConfig};
use super::cost::CostViability;
use super::geo::GeoPoint;
use super::kinematics::DEFAULT_HARSH_BRAKE_MPS2;
use super::AnalyticsError;
use crate::domain::{DataPointKind, LockState, NotificationKind, RoadClass, SampleValue, Vin};
use crate::scalar::Scalar;
use crate::storage::{SeriesStore, TimeRange};
use crate::time::{self, DailyWindow, Timestamp, DEFAULT_TZ};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsConfig {
    pub tz: Tz,
    pub night: DailyWindow,
    pub segmentation: SegmentationConfig,
    pub harsh_brake_mps2: f64,
    pub overspeed_tolerance_kmh: f64,
    pub match_radius_m: f64,
    /// Accepted lateness of an odometer reading after its poll slot.
    pub poll_tolerance_secs: i64,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            tz: DEFAULT_TZ,
            night: DailyWindow::night(),
            segmentation: SegmentationConfig::default(),
            harsh_brake_mps2: DEFAULT_HARSH_BRAKE_MPS2,
            overspeed_tolerance_kmh: DEFAULT_OVERSPEED_TOLERANCE_KMH,
            match_radius_m: DEFAULT_MATCH_RADIUS_M,
            poll_tolerance_secs: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSummary {
    pub vin: Vin,
    #[serde(with = "time::rfc3339")]
    pub start: Timestamp,
    #[serde(with = "time::rfc3339")]
    pub end: Timestamp,
    pub distance_km: f64,
    pub night_km: f64,
    pub max_speed_kmh: f64,
    pub mean_speed_kmh: f64,
    pub harsh_brake_count: usize,
    pub overspeed_km: f64,
    /// Distance not matched to any map segment (all of it without a map).
    pub uncovered_km: f64,
    pub urban_km: f64,
    pub point_count: usize,
}

/// Summarises one segmented trip. `distance_km` is `night_km + day_km`.
pub fn summarize_trip<T: Scalar>(
    vin: &Vin,
    points: &[Fix<T>],
    cfg: &AnalyticsConfig,
    map: Option<&SpeedLimitMap<T>>,
) -> Result<TripSummary, AnalyticsError> {
    let speeds = estimate_speeds(points, Duration::seconds(cfg.segmentation.idle_gap_secs))?;
    let split = split_day_night(&speeds, cfg.tz, cfg.night);
    let distance = split.total_km().as_f64();
    let max_speed = speeds.iter().map(|s| s.speed_kmh.as_f64()).fold(0.0, f64::max);
    let start = points[0].at;
    let end = points[points.len() - 1].at;
    let hours = (end - start).num_milliseconds() as f64 / 3_600_000.0;
    let brakes = detect_harsh_brakes(&speeds, T::lit(cfg.harsh_brake_mps2)).len();
    let (overspeed_km, uncovered_km, urban_km) = match map {
        Some(m) if !m.is_empty() => {
            let r = compute_overspeed(&speeds, m, cfg.match_radius_m, T::lit(cfg.overspeed_tolerance_kmh))?;
            let urban = r.by_class.get(&RoadClass::Urban).map(|c| c.distance_km.as_f64()).unwrap_or(0.0);
            (r.overspeed_km.as_f64(), r.uncovered_km.as_f64(), urban)
        }
        _ => (0.0, distance, 0.0),
    };
    Ok(TripSummary {
        vin: vin.clone(),
        start,
        end,
        distance_km: distance,
        night_km: split.night_km.as_f64(),
        max_speed_kmh: max_speed,
        mean_speed_kmh: if hours > 0.0 { distance / hours } else { 0.0 },
        harsh_brake_count: brakes,
        overspeed_km,
        uncovered_km,
        urban_km,
        point_count: points.len(),
    })
}

/// GPS fixes of `vin` in `range`, one per timestamp.
pub fn gps_fixes(store: &dyn SeriesStore, vin: &Vin, range: TimeRange) -> Vec<Fix<f64>> {
    let mut out: Vec<Fix<f64>> = Vec::new();
    for s in store.query_series(vin, DataPointKind::GpsCoordinates, range, None) {
        if let SampleValue::Position(p) = s.value {
            if out.last().is_some_and(|f| f.at == s.observed_at) {
                continue;
            }
            out.push(Fix { at: s.observed_at, pos: GeoPoint::from_position(p) });
        }
    }
    out
}

/// Fix lists of the trips found in `range`.
pub fn segment_vin_trips(store: &dyn SeriesStore, vin: &Vin, range: TimeRange, cfg: &AnalyticsConfig) -> Vec<Vec<Fix<f64>>> {
    let fixes = gps_fixes(store, vin, range);
    segment_trips(&fixes, &cfg.segmentation).into_iter().map(|r| fixes[r].to_vec()).collect()
}

pub fn trip_summaries(
    store: &dyn SeriesStore,
    vin: &Vin,
    range: TimeRange,
    cfg: &AnalyticsConfig,
    map: Option<&SpeedLimitMap<f64>>,
) -> Result<Vec<TripSummary>, AnalyticsError> {
    segment_vin_trips(store, vin, range, cfg).iter().map(|t| summarize_trip(vin, t, cfg, map)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IncidentCounts {
    pub accident: u32,
    pub breakdown: u32,
    pub emergency: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Gps,
    OdometerPolls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFeatureVector {
    pub vin: Vin,
    #[serde(with = "time::rfc3339")]
    pub period_from: Timestamp,
    #[serde(with = "time::rfc3339")]
    pub period_to: Timestamp,
    pub source: FeatureSource,
    pub trip_count: usize,
    pub total_km: f64,
    pub night_km: f64,
    pub night_fraction: f64,
    pub urban_fraction: f64,
    pub overspeed_fraction: f64,
    pub harsh_brakes_per_100km: f64,
    pub accident_flags: IncidentCounts,
}

fn fraction(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        (part / whole).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

pub fn incident_counts(store: &dyn SeriesStore, vin: &Vin, range: TimeRange) -> IncidentCounts {
    let mut c = IncidentCounts::default();
    for e in store.events(vin, range) {
        match e.kind {
            NotificationKind::AccidentReported => c.accident += 1,
            NotificationKind::BreakdownReported => c.breakdown += 1,
            NotificationKind::EmergencyReported => c.emergency += 1,
            _ => {}
        }
    }
    c
}

/// Aggregates trips (or odometer polls for odometer-only vehicles) and
/// incident notifications over `[from, to)`.
pub fn build_risk_features(
    store: &dyn SeriesStore,
    vin: &Vin,
    from: Timestamp,
    to: Timestamp,
    cfg: &AnalyticsConfig,
    map: Option<&SpeedLimitMap<f64>>,
) -> Result<RiskFeatureVector, AnalyticsError> {
    let range = TimeRange::between(from, to);
    let trips = trip_summaries(store, vin, range, cfg, map)?;
    let accident_flags = incident_counts(store, vin, range);
    if !trips.is_empty() {
        let total: f64 = trips.iter().map(|t| t.distance_km).sum();
        let night: f64 = trips.iter().map(|t| t.night_km).sum();
        let urban: f64 = trips.iter().map(|t| t.urban_km).sum();
        let over: f64 = trips.iter().map(|t| t.overspeed_km).sum();
        let brakes: usize = trips.iter().map(|t| t.harsh_brake_count).sum();
        return Ok(RiskFeatureVector {
            vin: vin.clone(),
            period_from: from,
            period_to: to,
            source: FeatureSource::Gps,
            trip_count: trips.len(),
            total_km: total,
            night_km: night,
            night_fraction: fraction(night, total),
            urban_fraction: fraction(urban, total),
            overspeed_fraction: fraction(over, total),
            harsh_brakes_per_100km: if total > 0.0 { brakes as f64 * 100.0 / total } else { 0.0 },
            accident_flags,
        });
    }
    let odo = store.query_series(vin, DataPointKind::Odometer, range, None);
    let readings: Vec<f64> = odo.iter().filter_map(|s| s.value.as_km()).collect();
    let total = match (readings.first(), readings.last()) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => return Err(AnalyticsError::NoDataInPeriod),
    };
    let mut night = 0.0;
    let first_day = time::local_date(cfg.tz, from) - Days::new(1);
    let last_day = time::local_date(cfg.tz, to);
    let mut day = first_day;
    while day <= last_day {
        if let Ok(km) = nightly_distance_from_polls(store, vin, day, cfg) {
            let slot = time::local_to_utc(cfg.tz, day, cfg.night.start);
            if slot >= from && slot < to {
                night += km;
            }
        }
        day = day + Days::new(1);
    }
    Ok(RiskFeatureVector {
        vin: vin.clone(),
        period_from: from,
        period_to: to,
        source: FeatureSource::OdometerPolls,
        trip_count: 0,
        total_km: total,
        night_km: night,
        night_fraction: fraction(night, total),
        urban_fraction: 0.0,
        overspeed_fraction: 0.0,
        harsh_brakes_per_100km: 0.0,
        accident_flags,
    })
}

fn odometer_near(store: &dyn SeriesStore, vin: &Vin, slot: Timestamp, tolerance: Duration) -> Option<f64> {
    store
        .query_series(vin, DataPointKind::Odometer, TimeRange::between(slot, slot + tolerance + Duration::milliseconds(1)), None)
        .first()
        .and_then(|s| s.value.as_km())
}

/// Odometer at the morning slot of `day + 1` minus odometer at the evening slot of `day`.
pub fn nightly_distance_from_polls(
    store: &dyn SeriesStore,
    vin: &Vin,
    day: NaiveDate,
    cfg: &AnalyticsConfig,
) -> Result<f64, AnalyticsError> {
    let tolerance = Duration::seconds(cfg.poll_tolerance_secs);
    let evening = time::local_to_utc(cfg.tz, day, cfg.night.start);
    let morning = time::local_to_utc(cfg.tz, day + Days::new(1), cfg.night.end);
    let e = odometer_near(store, vin, evening, tolerance).ok_or(AnalyticsError::MissingSlot { slot: evening })?;
    let m = odometer_near(store, vin, morning, tolerance).ok_or(AnalyticsError::MissingSlot { slot: morning })?;
    Ok((m - e).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheftReport {
    pub vin: Vin,
    pub last_lock_state: Option<LockState>,
    #[serde(with = "time::rfc3339::option")]
    pub last_lock_at: Option<Timestamp>,
    pub last_trajectory: Option<Vec<Fix<f64>>>,
    #[serde(with = "time::rfc3339")]
    pub last_seen_at: Timestamp,
}

pub fn theft_report(store: &dyn SeriesStore, vin: &Vin, cfg: &AnalyticsConfig) -> Result<TheftReport, AnalyticsError> {
    let last = store.last_known(vin, DataPointKind::ALL);
    let last_seen_at = last.values().map(|s| s.observed_at).max().ok_or_else(|| AnalyticsError::NoDataForVin(vin.clone()))?;
    let lock = last.get(&DataPointKind::DoorsLockState);
    let trips = segment_vin_trips(store, vin, TimeRange::all(), cfg);
    Ok(TheftReport {
        vin: vin.clone(),
        last_lock_state: lock.and_then(|s| s.value.as_lock()),
        last_lock_at: lock.map(|s| s.observed_at),
        last_trajectory: trips.last().cloned(),
        last_seen_at,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VinReport {
    pub schema_version: u32,
    pub vin: Vin,
    #[serde(with = "time::rfc3339")]
    pub period_from: Timestamp,
    #[serde(with = "time::rfc3339")]
    pub period_to: Timestamp,
    pub trips: Vec<TripSummary>,
    pub risk: Option<RiskFeatureVector>,
    pub cost: Option<CostViability<f64>>,
}

/// Per-VIN report; risk features are omitted when the period holds no data.
pub fn vin_report(
    store: &dyn SeriesStore,
    vin: &Vin,
    from: Timestamp,
    to: Timestamp,
    cfg: &AnalyticsConfig,
    map: Option<&SpeedLimitMap<f64>>,
    cost: Option<CostViability<f64>>,
) -> Result<VinReport, AnalyticsError> {
    let trips = trip_summaries(store, vin, TimeRange::between(from, to), cfg, map)?;
    let risk = match build_risk_features(store, vin, from, to, cfg, map) {
        Ok(r) => Some(r),
        Err(AnalyticsError::NoDataInPeriod) => None,
        Err(e) => return Err(e),
    };
    Ok(VinReport { schema_version: REPORT_SCHEMA_VERSION, vin: vin.clone(), period_from: from, period_to: to, trips, risk, cost })
}

#[derive(Serialize)]
struct TripRow<'a> {
    schema_version: u32,
    vin: &'a str,
    start: String,
    end: String,
    distance_km: String,
    night_km: String,
    max_speed_kmh: String,
    mean_speed_kmh: String,
    harsh_brake_count: usize,
    overspeed_km: String,
    uncovered_km: String,
    point_count: usize,
}

/// CSV trip table with a header row.
pub fn write_trip_csv<W: Write>(trips: &[TripSummary], out: W) -> Result<(), AnalyticsError> {
    let mut w = csv::Writer::from_writer(out);
    let f = |v: f64| format!("{v:.3}");
    for t in trips {
        w.serialize(TripRow {
            schema_version: REPORT_SCHEMA_VERSION,
            vin: t.vin.as_str(),
            start: time::format_rfc3339(&t.start),
            end: time::format_rfc3339(&t.end),
            distance_km: f(t.distance_km),
            night_km: f(t.night_km),
            max_speed_kmh: f(t.max_speed_kmh),
            mean_speed_kmh: f(t.mean_speed_kmh),
            harsh_brake_count: t.harsh_brake_count,
            overspeed_km: f(t.overspeed_km),
            uncovered_km: f(t.uncovered_km),
            point_count: t.point_count,
        })
        .map_err(|e| AnalyticsError::Output(e.to_string()))?;
    }
    if trips.is_empty() {
        w.write_record([
            "schema_version", "vin", "start", "end", "distance_km", "night_km", "max_speed_kmh", "mean_speed_kmh",
            "harsh_brake_count", "overspeed_km", "uncovered_km", "point_count",
        ])
        .map_err(|e| AnalyticsError::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| AnalyticsError::Output(e.to_string()))
}
