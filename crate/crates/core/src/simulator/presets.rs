//! Named vehicle configurations used by the CLI and the test suites.

use chrono::Duration;

use super::trace::{LengthDistribution, RoadShare, SpeedProfile, TripCount, TripModel};
use super::vehicle::{FaultPlan, OutageWindow, SimVehicleConfig};
use crate::domain::{Position, PrivacyMechanism, Vehicle, Vin};
use crate::eligibility::FleetFixture;
use crate::time::{Timestamp, DEFAULT_TZ};

pub const PRESET_NAMES: &[&str] = &["bmw-116d", "bmw-x5", "mercedes-gla", "mercedes-gle", "mercedes-clean", "peugeot-208"];

/// Kirchberg, Luxembourg City.
pub const HOME: Position = Position { lat: 49.6283, lon: 6.1617 };

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub vehicle: Vehicle,
    pub sim: SimVehicleConfig,
}

fn fixture_vehicle(vin: &str) -> Vehicle {
    let vin = Vin::parse(vin).expect("preset VINs are valid");
    FleetFixture::fleet19()
        .vehicles
        .into_iter()
        .find(|v| v.vin == vin)
        .expect("preset VINs come from the bundled fleet")
}

fn outage(epoch: Timestamp, from_day: i64, days: i64) -> OutageWindow {
    OutageWindow { from: epoch + Duration::days(from_day), to: epoch + Duration::days(from_day + days) }
}

/// Trip model for a rarely used city car with short hops.
pub fn city_hops() -> TripModel {
    TripModel {
        trips_per_day: 0.6,
        trip_count: TripCount::Poisson,
        trip_length_km: LengthDistribution { mean: 3.6, spread: 1.2 },
        night_trip_fraction: 0.1,
        speed_profile: SpeedProfile {
            urban: RoadShare { share: 0.85, speed_kmh: 36.0 },
            rural: RoadShare { share: 0.15, speed_kmh: 68.0 },
            highway: RoadShare { share: 0.0, speed_kmh: 110.0 },
        },
        harsh_brake_rate: 3.0,
        gps_emit_interval_secs: 30,
    }
}

fn suv_errands() -> TripModel {
    TripModel {
        trips_per_day: 0.8,
        trip_count: TripCount::Poisson,
        trip_length_km: LengthDistribution { mean: 4.5, spread: 1.5 },
        night_trip_fraction: 0.1,
        speed_profile: SpeedProfile {
            urban: RoadShare { share: 0.75, speed_kmh: 38.0 },
            rural: RoadShare { share: 0.2, speed_kmh: 72.0 },
            highway: RoadShare { share: 0.05, speed_kmh: 115.0 },
        },
        harsh_brake_rate: 2.0,
        gps_emit_interval_secs: 30,
    }
}

/// Looks up a preset; `epoch` anchors fault windows.
pub fn preset(name: &str, epoch: Timestamp) -> Option<Preset> {
    let (name, vin, model, mechanism, faults): (&'static str, &str, TripModel, PrivacyMechanism, FaultPlan) =
        match name {
            "bmw-116d" => ("bmw-116d", "WBA11AAAL00000104", city_hops(), PrivacyMechanism::ScreenV1, FaultPlan::default()),
            "bmw-x5" => ("bmw-x5", "WBAX5AAAL00000103", suv_errands(), PrivacyMechanism::ScreenV2, FaultPlan::default()),
            "mercedes-gla" => (
                "mercedes-gla",
                "W1NGLAAAL00000108",
                TripModel::commuter(),
                PrivacyMechanism::ScreenV3,
                FaultPlan { api_outages: vec![outage(epoch, 18, 25)], ..FaultPlan::default() },
            ),
            "mercedes-gle" => (
                "mercedes-gle",
                "W1NGLAAAL00000109",
                TripModel::commuter(),
                PrivacyMechanism::ScreenV3,
                FaultPlan { api_outages: vec![outage(epoch, 5, 21)], ..FaultPlan::default() },
            ),
            "mercedes-clean" => (
                "mercedes-clean",
                "W1NGLAAAL00000108",
                TripModel::commuter(),
                PrivacyMechanism::ScreenV3,
                FaultPlan::default(),
            ),
            "peugeot-208" => (
                "peugeot-208",
                "VF320AAAL00000110",
                TripModel::commuter(),
                PrivacyMechanism::DoublePush,
                FaultPlan::default(),
            ),
            _ => return None,
        };
    let vehicle = fixture_vehicle(vin);
    let sim = SimVehicleConfig {
        vin: vehicle.vin.clone(),
        profile: vehicle.brand.as_str().to_string(),
        home_location: HOME,
        tz: DEFAULT_TZ,
        trip_model: model,
        privacy_mechanism: mechanism,
        fault_plan: faults,
        initial_odometer_km: 18_250.0,
        brake_fluid_change_date: None,
    };
    Some(Preset { name, vehicle, sim })
}

/// Fault-free preset used when only a brand is given.
pub fn preset_for_brand(brand: &str) -> Option<&'static str> {
    match brand.trim().to_ascii_lowercase().as_str() {
        "bmw" | "bmw-like" => Some("bmw-116d"),
        "mercedes" | "mercedes-like" | "mercedes-benz" => Some("mercedes-clean"),
        "peugeot" | "stellantis-like" => Some("peugeot-208"),
        _ => None,
    }
}
