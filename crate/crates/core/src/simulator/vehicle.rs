//! Per-vehicle simulation state: lazily generated trips and current readings.

use std::collections::BTreeSet;

use chrono::{Datelike, Days, Duration, NaiveDate, Timelike};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::trace::{generate_day, TraceError, TraceSpec, Trip, TripModel};
use crate::domain::{
    BrandId, DataPointKind, HoodState, LockState, NotificationKind, Position, PrivacyMechanism, SampleValue, Vin,
};
use crate::quota::QuotaLedger;
use crate::time::{self, Timestamp, DEFAULT_TZ};

const TANK_LITERS: f64 = 50.0;
const RESERVE_LITERS: f64 = 8.0;
const LITERS_PER_KM: f64 = 0.06;
const SERVICE_INTERVAL_KM: f64 = 30_000.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageWindow {
    #[serde(with = "time::rfc3339")]
    pub from: Timestamp,
    #[serde(with = "time::rfc3339")]
    pub to: Timestamp,
}

impl OutageWindow {
    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.from && t < self.to
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedEvent {
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
    pub kind: NotificationKind,
}

/// Scripted faults for one vehicle.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultPlan {
    /// Number of initial transmission tests that fail.
    #[serde(default)]
    pub transmission_test_failures: u32,
    /// Windows during which the data API answers 503 for this vehicle.
    #[serde(default)]
    pub api_outages: Vec<OutageWindow>,
    #[serde(default)]
    pub scripted_events: Vec<ScriptedEvent>,
}

impl FaultPlan {
    pub fn in_outage(&self, t: Timestamp) -> bool {
        self.api_outages.iter().any(|w| w.contains(t))
    }
}

fn default_tz() -> Tz {
    DEFAULT_TZ
}

fn default_odometer() -> f64 {
    20_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimVehicleConfig {
    pub vin: Vin,
    /// Brand id or alias resolvable through the profile registry.
    pub profile: String,
    pub home_location: Position,
    #[serde(default = "default_tz")]
    pub tz: Tz,
    pub trip_model: TripModel,
    pub privacy_mechanism: PrivacyMechanism,
    #[serde(default)]
    pub fault_plan: FaultPlan,
    #[serde(default = "default_odometer")]
    pub initial_odometer_km: f64,
    #[serde(default)]
    pub brake_fluid_change_date: Option<NaiveDate>,
}

impl SimVehicleConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        self.trip_model.validate()?;
        if !self.home_location.is_valid() {
            return Err(TraceError::NotPositive("home_location"));
        }
        if !(self.initial_odometer_km >= 0.0) {
            return Err(TraceError::NotPositive("initial_odometer_km"));
        }
        Ok(())
    }
}

/// Readings that depend only on where the vehicle is on its timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub position: Position,
    pub heading_deg: f64,
    pub odometer_km: f64,
    pub driving: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimVehicle {
    pub config: SimVehicleConfig,
    pub brand: BrandId,
    seed: u64,
    first_day: NaiveDate,
    trips: Vec<Trip>,
    /// Cumulative trip distance before each trip.
    km_before: Vec<f64>,
    generated_days: u32,
    tail_origin: Position,
    pub(super) quota: QuotaLedger,
    pub(super) transmission_tests_run: u32,
    /// Whether the OEM currently pushes notifications for this vehicle.
    pub(super) sharing: bool,
}

impl SimVehicle {
    pub fn new(config: SimVehicleConfig, brand: BrandId, quota: QuotaLedger, seed: u64, epoch: Timestamp) -> Self {
        let first_day = time::local_date(config.tz, epoch);
        let home = config.home_location;
        Self {
            config,
            brand,
            seed,
            first_day,
            trips: Vec::new(),
            km_before: Vec::new(),
            generated_days: 0,
            tail_origin: home,
            quota,
            transmission_tests_run: 0,
            sharing: false,
        }
    }

    pub fn vin(&self) -> &Vin {
        &self.config.vin
    }

    /// Whether the OEM currently shares this vehicle's data.
    pub fn is_sharing(&self) -> bool {
        self.sharing
    }

    pub fn fault_plan(&self) -> &FaultPlan {
        &self.config.fault_plan
    }

    pub fn tz(&self) -> Tz {
        self.config.tz
    }

    /// Generates trips until every generation day starting at or before `t` exists.
    pub fn ensure_generated(&mut self, t: Timestamp) {
        let date = time::local_date(self.config.tz, t);
        let needed = (date - self.first_day).num_days() + 1;
        while (self.generated_days as i64) <= needed {
            let spec = TraceSpec {
                vin: &self.config.vin,
                home: self.config.home_location,
                tz: self.config.tz,
                model: &self.config.trip_model,
                first_day: self.first_day,
            };
            let day = generate_day(&spec, self.seed, self.generated_days, self.tail_origin, self.trips.len() as u32);
            for trip in day {
                let before = self.km_before.last().copied().unwrap_or(0.0)
                    + self.trips.last().map(|t| t.distance_km).unwrap_or(0.0);
                self.tail_origin = trip.end_position();
                self.km_before.push(before);
                self.trips.push(trip);
            }
            self.generated_days += 1;
        }
    }

    /// Trips generated so far.
    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn trips_between(&mut self, from: Timestamp, to: Timestamp) -> Vec<&Trip> {
        self.ensure_generated(to);
        self.trips.iter().filter(|t| t.start >= from && t.end() <= to).collect()
    }

    pub fn state_at(&mut self, t: Timestamp) -> VehicleState {
        self.ensure_generated(t);
        let idx = self.trips.partition_point(|trip| trip.start <= t);
        if idx == 0 {
            return VehicleState {
                position: self.config.home_location,
                heading_deg: 0.0,
                odometer_km: self.config.initial_odometer_km,
                driving: false,
            };
        }
        let trip = &self.trips[idx - 1];
        let base = self.config.initial_odometer_km + self.km_before[idx - 1];
        if t < trip.end() {
            let p = trip.state_at(t);
            VehicleState { position: p.position, heading_deg: p.heading_deg, odometer_km: base + p.distance_km, driving: true }
        } else {
            let last = trip.legs.last().map(|l| l.heading_deg).unwrap_or(0.0);
            VehicleState {
                position: trip.end_position(),
                heading_deg: last,
                odometer_km: base + trip.distance_km,
                driving: false,
            }
        }
    }

    pub fn value(&mut self, kind: DataPointKind, t: Timestamp) -> SampleValue {
        let s = self.state_at(t);
        let driven = (s.odometer_km - self.config.initial_odometer_km).max(0.0);
        match kind {
            DataPointKind::Odometer => SampleValue::Kilometers(round_to(s.odometer_km, 0.1)),
            DataPointKind::GpsCoordinates => {
                SampleValue::Position(Position::new(round_to(s.position.lat, 1e-6), round_to(s.position.lon, 1e-6)))
            }
            DataPointKind::Heading => SampleValue::Degrees(round_to(s.heading_deg, 0.1) % 360.0),
            DataPointKind::FuelVolume => {
                let range_km = (TANK_LITERS - RESERVE_LITERS) / LITERS_PER_KM;
                SampleValue::Liters(round_to(TANK_LITERS - (driven % range_km) * LITERS_PER_KM, 0.1))
            }
            DataPointKind::DistanceToNextMaintenance => {
                SampleValue::Kilometers(round_to(SERVICE_INTERVAL_KM - s.odometer_km % SERVICE_INTERVAL_KM, 1.0))
            }
            DataPointKind::DoorsLockState => {
                SampleValue::DoorLock(if s.driving { LockState::Unlocked } else { LockState::Locked })
            }
            DataPointKind::HoodPosition => SampleValue::Hood(HoodState::Closed),
            DataPointKind::OutsideTemperature => {
                let local = t.with_timezone(&self.config.tz);
                let season = (2.0 * std::f64::consts::PI * (local.ordinal() as f64 - 105.0) / 365.0).sin();
                let hour = local.hour() as f64 + local.minute() as f64 / 60.0;
                let diurnal = (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin();
                SampleValue::Celsius(round_to(10.0 + 9.0 * season + 4.0 * diurnal, 0.1))
            }
            DataPointKind::BrakeFluidChangeDate => SampleValue::Date(
                self.config.brake_fluid_change_date.unwrap_or(self.first_day - Days::new(400)),
            ),
            DataPointKind::AccelerationEvaluation => SampleValue::Opaque(
                if self.config.trip_model.speed_profile.highway.share > 0.3 { "dynamic" } else { "moderate" }.into(),
            ),
            DataPointKind::DrivingStyle => SampleValue::Opaque(
                if self.config.trip_model.harsh_brake_rate > 3.0 { "sporty" } else { "calm" }.into(),
            ),
        }
    }

    /// Notification instants in `(from, to]`, ordered, restricted to `supported` kinds.
    pub fn emissions(
        &mut self,
        from: Timestamp,
        to: Timestamp,
        supported: &BTreeSet<NotificationKind>,
    ) -> Vec<(Timestamp, NotificationKind)> {
        let mut out = Vec::new();
        if self.sharing && supported.contains(&NotificationKind::LocationChange) {
            self.ensure_generated(to);
            let interval = self.config.trip_model.gps_emit_interval_secs;
            let first = self.trips.partition_point(|t| t.end() <= from);
            for trip in &self.trips[first..] {
                if trip.start > to {
                    break;
                }
                out.extend(
                    trip.emission_times(interval)
                        .filter(|at| *at > from && *at <= to)
                        .map(|at| (at, NotificationKind::LocationChange)),
                );
            }
        }
        for ev in &self.config.fault_plan.scripted_events {
            let deliverable = self.sharing || ev.kind == NotificationKind::RevokeOfConsent;
            if ev.at > from && ev.at <= to && deliverable && supported.contains(&ev.kind) {
                out.push((ev.at, ev.kind));
            }
        }
        out.sort();
        out
    }

    /// Earliest notification instant in `(after, until]`.
    pub fn next_emission(
        &mut self,
        after: Timestamp,
        until: Timestamp,
        supported: &BTreeSet<NotificationKind>,
    ) -> Option<Timestamp> {
        let mut best: Option<Timestamp> = self
            .config
            .fault_plan
            .scripted_events
            .iter()
            .filter(|e| e.at > after && e.at <= until && supported.contains(&e.kind))
            .filter(|e| self.sharing || e.kind == NotificationKind::RevokeOfConsent)
            .map(|e| e.at)
            .min();
        if self.sharing && supported.contains(&NotificationKind::LocationChange) {
            let interval = self.config.trip_model.gps_emit_interval_secs as i64;
            let mut horizon = after;
            while horizon < until {
                horizon = (horizon + Duration::days(1)).min(until);
                self.ensure_generated(horizon);
                let first = self.trips.partition_point(|t| t.end() <= after);
                let found = self.trips[first..]
                    .iter()
                    .take_while(|t| t.start <= until)
                    .find_map(|t| {
                        let k = ((after - t.start).num_seconds().max(0) / interval) + 1;
                        let at = t.start + Duration::seconds(k * interval);
                        (at <= t.end() && at > after && at <= until).then_some(at)
                    });
                if let Some(at) = found {
                    best = Some(best.map_or(at, |b| b.min(at)));
                    break;
                }
                if best.is_some_and(|b| b <= horizon) {
                    break;
                }
            }
        }
        best
    }
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}
