use std::collections::{BTreeSet, HashSet};

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use proptest::prelude::*;

use super::*;
use crate::domain::{Position, RoadClass, SampleValue};
use crate::time::{DailyWindow, DEFAULT_TZ};

fn epoch() -> Timestamp {
    // Midnight local time in Luxembourg.
    Utc.with_ymd_and_hms(2022, 1, 2, 23, 0, 0).unwrap()
}

fn bmw() -> Vin {
    Vin::parse("WBA11AAAL00000104").unwrap()
}

fn mercedes() -> Vin {
    Vin::parse("W1NGLAAAL00000108").unwrap()
}

fn sim() -> Simulator {
    let vehicles = ["bmw-116d", "mercedes-clean"]
        .iter()
        .map(|n| presets::preset(n, epoch()).unwrap().sim)
        .collect();
    Simulator::new(SimulationConfig::new(7, epoch(), vehicles), ProfileRegistry::builtin()).unwrap()
}

fn grant(sim: &mut Simulator, vin: &Vin, now: Timestamp) -> AccessTokenGrant {
    let code = sim.approve_data_sharing(vin, now).unwrap();
    sim.token_exchange(&GrantRequest::AuthorizationCode { code }, now).unwrap()
}

fn spec<'a>(vin: &'a Vin, model: &'a TripModel) -> TraceSpec<'a> {
    TraceSpec { vin, home: presets::HOME, tz: DEFAULT_TZ, model, first_day: NaiveDate::from_ymd_opt(2022, 1, 3).unwrap() }
}

#[test]
fn same_seed_same_trace() {
    let vin = bmw();
    let model = TripModel::commuter();
    let a = generate_trace(&spec(&vin, &model), 10, 42).unwrap();
    let b = generate_trace(&spec(&vin, &model), 10, 42).unwrap();
    let c = generate_trace(&spec(&vin, &model), 10, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn invalid_models_are_rejected() {
    let vin = bmw();
    let mut model = TripModel::commuter();
    model.night_trip_fraction = 1.5;
    assert_eq!(generate_trace(&spec(&vin, &model), 1, 1), Err(TraceError::BadFraction(1.5)));
    model = TripModel::commuter();
    model.gps_emit_interval_secs = 0;
    assert_eq!(generate_trace(&spec(&vin, &model), 1, 1), Err(TraceError::BadEmitInterval));
    model = TripModel::commuter();
    model.trips_per_day = 0.0;
    assert!(matches!(generate_trace(&spec(&vin, &model), 1, 1), Err(TraceError::NotPositive(_))));
    assert_eq!(generate_trace(&spec(&vin, &TripModel::commuter()), 0, 1), Err(TraceError::NoDays));
}

#[test]
fn trip_count_over_thirty_days_is_plausible_for_most_seeds() {
    // Monte Carlo oracle: with two trips per day, 30 days land in [40, 80] for at least 95 % of seeds.
    let vin = bmw();
    let mut model = TripModel::commuter();
    model.trips_per_day = 2.0;
    let inside = (0..1000u64)
        .filter(|seed| {
            let n = generate_trace(&spec(&vin, &model), 30, *seed).unwrap().len();
            (40..=80).contains(&n)
        })
        .count();
    assert!(inside >= 950, "only {inside} of 1000 seeds in range");
}

#[test]
fn trips_respect_their_windows_and_ground_truth() {
    let vin = bmw();
    let mut model = TripModel::commuter();
    model.night_trip_fraction = 0.4;
    model.trips_per_day = 3.0;
    let trips = generate_trace(&spec(&vin, &model), 20, 9).unwrap();
    let night = DailyWindow::night();
    assert!(trips.iter().any(|t| t.night) && trips.iter().any(|t| !t.night));
    for t in &trips {
        let legs_km: f64 = t.legs.iter().map(Leg::distance_km).sum();
        assert!((legs_km - t.distance_km).abs() < 1e-9);
        if t.night {
            assert!(trip_is_inside(DEFAULT_TZ, t, night));
            assert_eq!(t.night_km, t.distance_km);
        } else {
            assert!(!night.contains_instant(DEFAULT_TZ, t.start) && !night.contains_instant(DEFAULT_TZ, t.end()));
            assert_eq!(t.night_km, 0.0);
        }
        assert!(t.distance_km >= 0.9);
    }
    for pair in trips.windows(2) {
        assert!(pair[1].start - pair[0].end() >= Duration::minutes(20));
        // Trips chain: each starts where the previous one parked.
        assert_eq!(pair[1].origin, pair[0].end_position());
    }
}

#[test]
fn accelerations_stay_below_harsh_except_scripted_brakes() {
    let vin = bmw();
    let mut model = TripModel::commuter();
    model.harsh_brake_rate = 20.0;
    let trips = generate_trace(&spec(&vin, &model), 5, 3).unwrap();
    let mut scripted = 0;
    for t in &trips {
        let mut onsets = Vec::new();
        let mut elapsed = 0i64;
        let mut prev: Option<f64> = None;
        let mut in_brake = false;
        for leg in &t.legs {
            // Per-second speed changes only happen at leg boundaries.
            if let Some(p) = prev {
                let decel = (p - leg.speed_kmh) / 3.6;
                assert!(decel <= 5.0 + 1e-9 && decel >= -2.0 - 1e-9, "decel {decel}");
                let harsh = decel >= 3.5;
                if harsh && !in_brake {
                    onsets.push(t.start + Duration::seconds(elapsed));
                }
                in_brake = harsh;
            }
            prev = Some(leg.speed_kmh);
            elapsed += leg.duration_s as i64;
        }
        assert_eq!(onsets, t.scripted_brakes);
        scripted += onsets.len();
    }
    assert!(scripted > 0);
}

#[test]
fn one_hertz_samples_sit_on_leg_boundaries() {
    let vin = bmw();
    let model = TripModel::commuter();
    let trips = generate_trace(&spec(&vin, &model), 3, 5).unwrap();
    let t = &trips[0];
    let pts = t.sample(1);
    assert_eq!(pts.len() as u32, t.duration_s() + 1);
    assert_eq!(pts[0].position, t.origin);
    let end = pts.last().unwrap();
    assert!((end.distance_km - t.distance_km).abs() < 1e-9);
    assert!((end.position.lat - t.end_position().lat).abs() < 1e-12);
    let mid = t.state_at(t.start + Duration::seconds(37));
    assert_eq!(mid.position, pts[37].position);
}

#[test]
fn twenty_minute_trip_emits_forty_location_changes() {
    let trip = Trip {
        vin: bmw(),
        seq: 0,
        start: epoch() + Duration::hours(8),
        origin: presets::HOME,
        legs: vec![Leg { duration_s: 1200, speed_kmh: 40.0, heading_deg: 90.0, road_class: RoadClass::Urban }],
        night: false,
        scripted_brakes: vec![],
        distance_km: 40.0 / 3.0,
        night_km: 0.0,
    };
    // Arithmetic oracle: 1200 s / 30 s.
    assert_eq!(trip.emission_times(30).count(), 1200 / 30);
}

#[test]
fn emissions_match_trip_schedule_and_parked_cars_stay_quiet() {
    let mut s = sim();
    let _ = grant(&mut s, &bmw(), epoch());
    let to = epoch() + Duration::days(5);
    let events = s.emit_notifications(to);
    let v = s.vehicle(&bmw()).unwrap();
    let expected: usize = v.trips().iter().filter(|t| t.end() <= to).map(|t| (t.duration_s() / 30) as usize).sum();
    assert_eq!(events.len(), expected);
    assert!(events.iter().all(|e| e.kind == NotificationKind::LocationChange && e.vin == bmw()));
    for e in &events {
        assert!(v.trips().iter().any(|t| t.contains(e.emitted_at)), "emission while parked");
    }
    let ids: HashSet<_> = events.iter().map(|e| e.delivery_id.clone()).collect();
    assert_eq!(ids.len(), events.len());
    // The Mercedes-like profile has no location notifications at all.
    let _ = grant(&mut s, &mercedes(), to);
    assert!(s.emit_notifications(to + Duration::days(5)).iter().all(|e| e.vin == bmw()));
}

#[test]
fn vehicles_without_data_sharing_emit_nothing() {
    let mut s = sim();
    assert!(s.emit_notifications(epoch() + Duration::days(5)).is_empty());
}

#[test]
fn next_activity_points_at_the_first_emission() {
    let mut s = sim();
    let _ = grant(&mut s, &bmw(), epoch());
    let until = epoch() + Duration::days(10);
    let next = s.next_activity(epoch(), until).unwrap();
    let first = s.emit_notifications(until)[0].emitted_at;
    assert_eq!(next, first);
}

#[test]
fn mercedes_third_call_in_a_day_is_refused() {
    let mut s = sim();
    let now = epoch() + Duration::hours(5);
    let g = grant(&mut s, &mercedes(), now);
    let kinds: BTreeSet<_> = [DataPointKind::Odometer].into();
    assert!(s.fetch_data(&mercedes(), &kinds, &g.access_token, now).is_ok());
    assert!(s.fetch_data(&mercedes(), &kinds, &g.access_token, now + Duration::minutes(1)).is_ok());
    let third = s.fetch_data(&mercedes(), &kinds, &g.access_token, now + Duration::minutes(2));
    assert!(matches!(third, Err(ApiError::QuotaExceeded { .. })));
    assert_eq!(third.unwrap_err().http_status(), 429);
    // Local midnight resets the budget (access token refreshed first).
    let next_day = epoch() + Duration::days(1);
    let g = s.token_exchange(&GrantRequest::RefreshToken { refresh_token: g.refresh_token }, next_day).unwrap();
    assert!(s.fetch_data(&mercedes(), &kinds, &g.access_token, next_day).is_ok());
}

#[test]
fn bmw_fifty_first_call_in_a_minute_is_refused() {
    let mut s = sim();
    let now = epoch() + Duration::hours(9);
    let g = grant(&mut s, &bmw(), now);
    let kinds: BTreeSet<_> = [DataPointKind::Odometer].into();
    for i in 0..50 {
        assert!(s.fetch_data(&bmw(), &kinds, &g.access_token, now + Duration::milliseconds(i * 500)).is_ok());
    }
    let r = s.fetch_data(&bmw(), &kinds, &g.access_token, now + Duration::seconds(30));
    assert!(matches!(r, Err(ApiError::QuotaExceeded { .. })));
}

#[test]
fn bmw_multi_kind_request_shares_one_timestamp() {
    let mut s = sim();
    let now = epoch() + Duration::hours(9);
    let g = grant(&mut s, &bmw(), now);
    let kinds: BTreeSet<_> = [DataPointKind::GpsCoordinates, DataPointKind::Odometer, DataPointKind::FuelVolume].into();
    let samples = s.fetch_data(&bmw(), &kinds, &g.access_token, now).unwrap();
    assert_eq!(samples.len(), 3);
    assert!(samples.iter().all(|x| x.observed_at == now && x.source == SampleSource::Request));
    assert_eq!(s.data_calls().len(), 1);
}

#[test]
fn token_hygiene() {
    let mut s = sim();
    let now = epoch() + Duration::hours(9);
    let g = grant(&mut s, &bmw(), now);
    let kinds: BTreeSet<_> = [DataPointKind::Odometer].into();
    let expired = now + Duration::seconds(3600);
    assert_eq!(s.fetch_data(&bmw(), &kinds, &g.access_token, expired), Err(ApiError::Unauthorized));
    assert_eq!(s.fetch_data(&mercedes(), &kinds, &g.access_token, now), Err(ApiError::Unauthorized));
    assert_eq!(s.fetch_data(&bmw(), &kinds, "at_forged", now), Err(ApiError::Unauthorized));
    s.revoke_at_oem(&bmw(), now).unwrap();
    assert_eq!(s.fetch_data(&bmw(), &kinds, &g.access_token, now), Err(ApiError::Unauthorized));
    let r = s.token_exchange(&GrantRequest::RefreshToken { refresh_token: g.refresh_token }, now);
    assert_eq!(r, Err(OAuthError::ConsentRevoked));
    // Failed calls consume no quota and are still logged.
    assert!(s.data_calls().iter().all(|c| c.status == 401));
}

#[test]
fn unsupported_kind_is_reported() {
    let mut s = sim();
    let now = epoch() + Duration::hours(9);
    let g = grant(&mut s, &mercedes(), now);
    let kinds: BTreeSet<_> = [DataPointKind::GpsCoordinates].into();
    assert_eq!(
        s.fetch_data(&mercedes(), &kinds, &g.access_token, now),
        Err(ApiError::UnsupportedKind { kind: DataPointKind::GpsCoordinates })
    );
}

#[test]
fn outage_window_returns_unavailable() {
    let mut s = sim();
    let now = epoch() + Duration::hours(9);
    let plan = FaultPlan {
        api_outages: vec![OutageWindow { from: now, to: now + Duration::minutes(30) }],
        ..FaultPlan::default()
    };
    s.apply_fault_plan(&mercedes(), plan).unwrap();
    let g = grant(&mut s, &mercedes(), now);
    let kinds: BTreeSet<_> = [DataPointKind::Odometer].into();
    assert_eq!(s.fetch_data(&mercedes(), &kinds, &g.access_token, now), Err(ApiError::Unavailable));
    assert!(s.fetch_data(&mercedes(), &kinds, &g.access_token, now + Duration::minutes(30)).is_ok());
}

#[test]
fn readings_follow_the_trip_timeline() {
    let mut s = sim();
    let v = s.vehicle_mut(&bmw()).unwrap();
    v.ensure_generated(epoch() + Duration::days(20));
    let trip = v.trips()[2].clone();
    let before = v.state_at(trip.start - Duration::seconds(1));
    let during = v.state_at(trip.start + Duration::seconds(60));
    let after = v.state_at(trip.end());
    assert!(!before.driving && during.driving && !after.driving);
    assert!((after.odometer_km - before.odometer_km - trip.distance_km).abs() < 1e-9);
    assert_eq!(v.value(DataPointKind::DoorsLockState, trip.start + Duration::seconds(60)), SampleValue::DoorLock(crate::domain::LockState::Unlocked));
    assert_eq!(v.value(DataPointKind::DoorsLockState, trip.end()), SampleValue::DoorLock(crate::domain::LockState::Locked));
    let p = after.position;
    assert!((p.lat - trip.end_position().lat).abs() < 1e-12);
}

#[test]
fn transmission_test_fails_as_scripted() {
    let mut s = sim();
    s.apply_fault_plan(&bmw(), FaultPlan { transmission_test_failures: 1, ..FaultPlan::default() }).unwrap();
    let now = epoch();
    let first = s.run_transmission_test(&bmw(), now, 360).unwrap();
    let second = s.run_transmission_test(&bmw(), now, 360).unwrap();
    assert!(!first.succeeded && second.succeeded);
    assert_eq!(first.elapsed(), Duration::seconds(360));
}

struct Receiver {
    down_until: Timestamp,
    seen: HashSet<String>,
    effects: u32,
}

impl WebhookSink for Receiver {
    fn deliver(&mut self, d: &WebhookDelivery, now: Timestamp) -> SinkResponse {
        if now < self.down_until {
            return SinkResponse::Unreachable;
        }
        if self.seen.insert(d.delivery_id.clone()) {
            self.effects += 1;
        }
        SinkResponse::Status(200)
    }
}

#[test]
fn scripted_event_delivered_after_platform_recovers() {
    let mut s = sim();
    let at = epoch() + Duration::hours(3);
    let plan = FaultPlan {
        scripted_events: vec![ScriptedEvent { at, kind: NotificationKind::AccidentReported }],
        ..FaultPlan::default()
    };
    s.apply_fault_plan(&bmw(), plan).unwrap();
    let _ = grant(&mut s, &bmw(), epoch());
    let events = s.emit_notifications(at);
    assert_eq!(events.len(), 1);
    // Down for the first two attempts (t and t+30 s).
    let mut rx = Receiver { down_until: at + Duration::seconds(31), seen: HashSet::new(), effects: 0 };
    let mut now = at;
    while let Some(due) = s.dispatcher().next_due() {
        now = due.max(now);
        s.pump_webhooks(now, &mut rx);
    }
    assert_eq!(rx.effects, 1);
    assert_eq!(s.dispatcher().attempts().len(), 3);
    assert_eq!(now - at, Duration::seconds(90));
    assert!(s.dispatcher().dead_letters().is_empty());
}

#[test]
fn trace_round_trips_through_json_lines() {
    let vin = bmw();
    let model = TripModel::commuter();
    let trips = generate_trace(&spec(&vin, &model), 4, 11).unwrap();
    let mut buf = Vec::new();
    write_trace(&trips, &mut buf).unwrap();
    assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), trips.len());
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back.len(), trips.len());
    for (a, b) in trips.iter().zip(&back) {
        assert_eq!(a.legs, b.legs);
        assert_eq!(a.start, b.start);
        assert_eq!(a.scripted_brakes, b.scripted_brakes);
    }
    assert!(matches!(read_trace("{oops".as_bytes()), Err(TraceError::Parse { line: 1, .. })));
}

#[test]
fn simulator_snapshot_round_trips() {
    let mut s = sim();
    let _ = grant(&mut s, &bmw(), epoch());
    s.emit_notifications(epoch() + Duration::days(2));
    let json = serde_json::to_string(&s).unwrap();
    let back: Simulator = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
}

#[test]
fn destination_moves_expected_distance() {
    let p = destination(Position::new(49.6, 6.12), 0.0, 1.0);
    // Due north: latitude change equals distance over radius.
    assert!((p.lat - 49.6 - (1.0 / EARTH_RADIUS_KM).to_degrees()).abs() < 1e-12);
    assert!((p.lon - 6.12).abs() < 1e-12);
}

proptest! {
    #[test]
    fn odometer_never_decreases(mut offsets in proptest::collection::vec(0i64..(10 * 86_400), 2..40)) {
        let mut s = sim();
        offsets.sort_unstable();
        let v = s.vehicle_mut(&bmw()).unwrap();
        let readings: Vec<f64> = offsets.iter().map(|o| v.state_at(epoch() + Duration::seconds(*o)).odometer_km).collect();
        for w in readings.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn simulator_quota_holds_under_bursts(gaps in proptest::collection::vec(0i64..4_000, 1..300)) {
        let mut s = sim();
        let start = epoch() + Duration::hours(9);
        let g = grant(&mut s, &bmw(), start);
        let kinds: BTreeSet<_> = [DataPointKind::Odometer].into();
        let mut now = start;
        for gap in gaps {
            now += Duration::milliseconds(gap);
            let _ = s.fetch_data(&bmw(), &kinds, &g.access_token, now);
        }
        let ok: Vec<Timestamp> = s.data_calls().iter().filter(|c| c.status == 200).map(|c| c.at).collect();
        for (i, a) in ok.iter().enumerate() {
            let n = ok[i..].iter().take_while(|b| **b < *a + Duration::seconds(60)).count();
            prop_assert!(n <= 50);
        }
    }
}
