use chrono::{Duration, NaiveDate, TimeZone, Utc};

use super::*;
use crate::domain::{
    DataPointKind, LockState, NotificationEvent, NotificationKind, Position, SampleSource, SampleValue,
    TelemetrySample,
};
use crate::simulator::{presets, SimulationConfig, Simulator};
use crate::domain::ProfileRegistry;
use crate::storage::{MemorySeriesStore, SeriesStore, TimeRange};
use crate::time::{self, hms, Timestamp, DEFAULT_TZ};

fn vin() -> Vin {
    Vin::parse("WBA11AAAL00000104").unwrap()
}

fn local(d: u32, h: u32, m: u32) -> Timestamp {
    time::local_to_utc(DEFAULT_TZ, NaiveDate::from_ymd_opt(2022, 3, d).unwrap(), hms(h, m, 0))
}

fn gps(at: Timestamp, lat: f64, lon: f64) -> TelemetrySample {
    TelemetrySample::new(vin(), DataPointKind::GpsCoordinates, SampleValue::Position(Position::new(lat, lon)), at, SampleSource::Notification)
        .unwrap()
}

fn odo(at: Timestamp, km: f64) -> TelemetrySample {
    TelemetrySample::new(vin(), DataPointKind::Odometer, SampleValue::Kilometers(km), at, SampleSource::Request).unwrap()
}

/// Northbound drive at `kmh`, one fix every `step` seconds.
fn drive(store: &mut MemorySeriesStore, start: Timestamp, minutes: i64, kmh: f64, step: i64) {
    let deg_per_s = kmh / 3600.0 / 111.195;
    let samples: Vec<_> = (0..=minutes * 60 / step)
        .map(|k| gps(start + Duration::seconds(k * step), 49.6 + deg_per_s * (k * step) as f64, 6.12))
        .collect();
    store.append_samples(&samples).unwrap();
}

#[test]
fn trip_summaries_split_distance_into_night_and_day() {
    let mut store = MemorySeriesStore::new();
    drive(&mut store, local(1, 8, 0), 20, 36.0, 10);
    drive(&mut store, local(1, 21, 30), 60, 60.0, 10);
    let cfg = AnalyticsConfig::default();
    let trips = trip_summaries(&store, &vin(), TimeRange::all(), &cfg, None).unwrap();
    assert_eq!(trips.len(), 2);
    assert!((trips[0].distance_km - 12.0).abs() < 0.05, "{}", trips[0].distance_km);
    assert_eq!(trips[0].night_km, 0.0);
    assert!((trips[1].distance_km - 60.0).abs() < 0.2);
    assert!((trips[1].night_km - 30.0).abs() < 0.2);
    for t in &trips {
        assert!(t.night_km <= t.distance_km);
        assert_eq!(t.uncovered_km, t.distance_km);
        assert!((t.max_speed_kmh - t.mean_speed_kmh).abs() < 0.5);
    }
    assert_eq!(trips[0].point_count, 121);
}

#[test]
fn duplicate_gps_timestamps_collapse_to_one_fix() {
    let mut store = MemorySeriesStore::new();
    let at = local(1, 8, 0);
    let mut twin = gps(at, 49.6, 6.12);
    twin.source = SampleSource::Request;
    store.append_samples(&[gps(at, 49.6, 6.12), twin]).unwrap();
    assert_eq!(gps_fixes(&store, &vin(), TimeRange::all()).len(), 1);
}

#[test]
fn risk_features_from_gps_and_incidents() {
    let mut store = MemorySeriesStore::new();
    drive(&mut store, local(1, 23, 0), 30, 60.0, 10);
    drive(&mut store, local(2, 10, 0), 30, 60.0, 10);
    store
        .append_event(&NotificationEvent {
            vin: vin(),
            kind: NotificationKind::AccidentReported,
            emitted_at: local(2, 10, 40),
            delivery_id: "dlv_a".into(),
        })
        .unwrap();
    let cfg = AnalyticsConfig::default();
    let r = build_risk_features(&store, &vin(), local(1, 0, 0), local(3, 0, 0), &cfg, None).unwrap();
    assert_eq!(r.source, FeatureSource::Gps);
    assert_eq!(r.trip_count, 2);
    assert!((r.total_km - 60.0).abs() < 0.2);
    assert!((r.night_fraction - 0.5).abs() < 0.01);
    assert_eq!(r.accident_flags, IncidentCounts { accident: 1, breakdown: 0, emergency: 0 });
    assert_eq!(r.harsh_brakes_per_100km, 0.0);
}

#[test]
fn empty_period_has_no_features() {
    let store = MemorySeriesStore::new();
    let cfg = AnalyticsConfig::default();
    assert_eq!(
        build_risk_features(&store, &vin(), local(1, 0, 0), local(2, 0, 0), &cfg, None),
        Err(AnalyticsError::NoDataInPeriod)
    );
    let report = vin_report(&store, &vin(), local(1, 0, 0), local(2, 0, 0), &cfg, None, None).unwrap();
    assert!(report.risk.is_none());
    assert_eq!(report.schema_version, REPORT_SCHEMA_VERSION);
}

#[test]
fn odometer_only_vehicle_uses_polls() {
    let mut store = MemorySeriesStore::new();
    store
        .append_samples(&[
            odo(local(1, 5, 0), 1000.0),
            odo(local(1, 22, 0) + Duration::seconds(30), 1040.0),
            odo(local(2, 5, 0), 1052.5),
            odo(local(2, 22, 0), 1080.0),
        ])
        .unwrap();
    let cfg = AnalyticsConfig::default();
    let day1 = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
    assert_eq!(nightly_distance_from_polls(&store, &vin(), day1, &cfg), Ok(12.5));
    let day2 = day1.succ_opt().unwrap();
    assert_eq!(
        nightly_distance_from_polls(&store, &vin(), day2, &cfg),
        Err(AnalyticsError::MissingSlot { slot: local(3, 5, 0) })
    );
    let r = build_risk_features(&store, &vin(), local(1, 0, 0), local(3, 0, 0), &cfg, None).unwrap();
    assert_eq!(r.source, FeatureSource::OdometerPolls);
    assert_eq!(r.total_km, 80.0);
    assert_eq!(r.night_km, 12.5);
}

#[test]
fn late_poll_outside_tolerance_is_missing() {
    let mut store = MemorySeriesStore::new();
    store.append_samples(&[odo(local(1, 22, 11), 10.0), odo(local(2, 5, 0), 12.0)]).unwrap();
    let day = NaiveDate::from_ymd_opt(2022, 3, 1).unwrap();
    assert!(matches!(
        nightly_distance_from_polls(&store, &vin(), day, &AnalyticsConfig::default()),
        Err(AnalyticsError::MissingSlot { .. })
    ));
}

#[test]
fn theft_report_needs_data() {
    let mut store = MemorySeriesStore::new();
    let cfg = AnalyticsConfig::default();
    assert_eq!(theft_report(&store, &vin(), &cfg), Err(AnalyticsError::NoDataForVin(vin())));
    drive(&mut store, local(1, 8, 0), 10, 36.0, 10);
    let lock_at = local(1, 8, 30);
    store
        .append_samples(&[TelemetrySample::new(
            vin(),
            DataPointKind::DoorsLockState,
            SampleValue::DoorLock(LockState::Locked),
            lock_at,
            SampleSource::Request,
        )
        .unwrap()])
        .unwrap();
    let r = theft_report(&store, &vin(), &cfg).unwrap();
    assert_eq!(r.last_lock_state, Some(LockState::Locked));
    assert_eq!(r.last_seen_at, lock_at);
    assert_eq!(r.last_trajectory.unwrap().len(), 61);
}

#[test]
fn csv_and_json_reports() {
    let mut store = MemorySeriesStore::new();
    drive(&mut store, local(1, 8, 0), 20, 36.0, 10);
    let cfg = AnalyticsConfig::default();
    let trips = trip_summaries(&store, &vin(), TimeRange::all(), &cfg, None).unwrap();
    let mut out = Vec::new();
    write_trip_csv(&trips, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("schema_version,vin,start,end,distance_km"));
    assert!(lines.next().unwrap().starts_with("1,WBA11AAAL00000104,2022-03-01T07:00:00"));
    let mut empty = Vec::new();
    write_trip_csv(&[], &mut empty).unwrap();
    assert_eq!(String::from_utf8(empty).unwrap().lines().count(), 1);

    let cost = cost_viability(6.5, 81.25, DEFAULT_VIABILITY_THRESHOLD).unwrap();
    let report = vin_report(&store, &vin(), local(1, 0, 0), local(2, 0, 0), &cfg, None, Some(cost)).unwrap();
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["cost"]["verdict"], "high-value-only");
    assert_eq!(json["trips"].as_array().unwrap().len(), 1);
}

#[test]
fn overspeed_on_matched_road() {
    let mut store = MemorySeriesStore::new();
    drive(&mut store, local(1, 8, 0), 10, 72.0, 10);
    let map: SpeedLimitMap<f64> = "r1 50 urban 49.59,6.12 49.75,6.12\n".parse().unwrap();
    let cfg = AnalyticsConfig::default();
    let trips = trip_summaries(&store, &vin(), TimeRange::all(), &cfg, Some(&map)).unwrap();
    assert!((trips[0].overspeed_km - trips[0].distance_km).abs() < 1e-9);
    assert!((trips[0].urban_km - trips[0].distance_km).abs() < 1e-9);
    assert_eq!(trips[0].uncovered_km, 0.0);
}

#[test]
fn poll_and_gps_night_distance_agree() {
    let epoch = Utc.with_ymd_and_hms(2022, 1, 2, 23, 0, 0).unwrap();
    let mut cfg = presets::preset("mercedes-clean", epoch).unwrap().sim;
    cfg.trip_model.night_trip_fraction = 0.5;
    cfg.trip_model.trips_per_day = 2.0;
    let vin = cfg.vin.clone();
    let mut sim = Simulator::new(SimulationConfig::new(11, epoch, vec![cfg]), ProfileRegistry::builtin()).unwrap();
    let v = sim.vehicle_mut(&vin).unwrap();
    let end = epoch + Duration::days(30);
    let mut store = MemorySeriesStore::new();
    let trips: Vec<_> = v.trips_between(epoch, end).into_iter().cloned().collect();
    for trip in &trips {
        let samples: Vec<_> = trip
            .sample(1)
            .iter()
            .map(|p| {
                TelemetrySample::new(vin.clone(), DataPointKind::GpsCoordinates, SampleValue::Position(p.position), p.at, SampleSource::Notification)
                    .unwrap()
            })
            .collect();
        store.append_samples(&samples).unwrap();
    }
    let acfg = AnalyticsConfig::default();
    let first = time::local_date(DEFAULT_TZ, epoch);
    let mut compared = 0;
    for d in 0..29 {
        let day = first + chrono::Days::new(d);
        for (date, at) in [(day, acfg.night.start), (day + chrono::Days::new(1), acfg.night.end)] {
            let slot = time::local_to_utc(DEFAULT_TZ, date, at);
            let km = v.value(DataPointKind::Odometer, slot);
            store
                .append_samples(&[TelemetrySample::new(vin.clone(), DataPointKind::Odometer, km, slot, SampleSource::Request).unwrap()])
                .unwrap();
        }
        let evening = time::local_to_utc(DEFAULT_TZ, day, acfg.night.start);
        let morning = time::local_to_utc(DEFAULT_TZ, day + chrono::Days::new(1), acfg.night.end);
        // Whole trips touching the night, so the midpoint split sees their night part.
        let range = TimeRange::between(evening - Duration::hours(3), morning + Duration::hours(1));
        let gps_night: f64 = trip_summaries(&store, &vin, range, &acfg, None).unwrap().iter().map(|t| t.night_km).sum();
        let polled = nightly_distance_from_polls(&store, &vin, day, &acfg).unwrap();
        if gps_night >= 10.0 {
            compared += 1;
            assert!((polled - gps_night).abs() / gps_night <= 0.05, "day {day}: polls {polled} gps {gps_night}");
        }
    }
    assert!(compared >= 3, "only {compared} comparable nights");
}
