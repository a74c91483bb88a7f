use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kinds::{DataPointKind, NotificationKind};
use super::vin::Vin;
use crate::time::{self, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockState {
    Locked,
    Unlocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoodState {
    Open,
    Closed,
}

/// WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub lat: f64,
    pub lon: f64,
}

impl Position {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// A typed observation value. Each data point kind accepts exactly one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleValue {
    Kilometers(f64),
    Liters(f64),
    Position(Position),
    Degrees(f64),
    Celsius(f64),
    DoorLock(LockState),
    Hood(HoodState),
    Date(NaiveDate),
    /// Uninterpreted OEM payload (acceleration evaluation, driving style).
    Opaque(String),
}

impl SampleValue {
    pub fn as_km(&self) -> Option<f64> {
        match self {
            SampleValue::Kilometers(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_position(&self) -> Option<Position> {
        match self {
            SampleValue::Position(p) => Some(*p),
            _ => None,
        }
    }

    pub fn as_liters(&self) -> Option<f64> {
        match self {
            SampleValue::Liters(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_lock(&self) -> Option<LockState> {
        match self {
            SampleValue::DoorLock(l) => Some(*l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Request,
    Notification,
}

impl fmt::Display for SampleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleSource::Request => "request",
            SampleSource::Notification => "notification",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("{kind} does not accept a {value} value")]
    WrongValueType { kind: DataPointKind, value: &'static str },
    #[error("{kind} value out of range: {detail}")]
    OutOfRange { kind: DataPointKind, detail: String },
}

fn value_name(v: &SampleValue) -> &'static str {
    match v {
        SampleValue::Kilometers(_) => "kilometers",
        SampleValue::Liters(_) => "liters",
        SampleValue::Position(_) => "position",
        SampleValue::Degrees(_) => "degrees",
        SampleValue::Celsius(_) => "celsius",
        SampleValue::DoorLock(_) => "door_lock",
        SampleValue::Hood(_) => "hood",
        SampleValue::Date(_) => "date",
        SampleValue::Opaque(_) => "opaque",
    }
}

/// Checks that `value` has the unit and range `kind` requires.
pub fn validate_value(kind: DataPointKind, value: &SampleValue) -> Result<(), SampleError> {
    use DataPointKind as D;
    use SampleValue as V;
    let out_of_range = |detail: String| Err(SampleError::OutOfRange { kind, detail });
    match (kind, value) {
        (D::Odometer | D::DistanceToNextMaintenance, V::Kilometers(km)) => {
            if !km.is_finite() || (kind == D::Odometer && *km < 0.0) {
                return out_of_range(format!("{km} km"));
            }
        }
        (D::FuelVolume, V::Liters(l)) => {
            if !l.is_finite() || *l < 0.0 {
                return out_of_range(format!("{l} l"));
            }
        }
        (D::GpsCoordinates, V::Position(p)) => {
            if !p.is_valid() {
                return out_of_range(format!("lat {} lon {}", p.lat, p.lon));
            }
        }
        (D::Heading, V::Degrees(h)) => {
            if !h.is_finite() || !(0.0..360.0).contains(h) {
                return out_of_range(format!("{h} deg"));
            }
        }
        (D::OutsideTemperature, V::Celsius(c)) => {
            if !c.is_finite() {
                return out_of_range(format!("{c} C"));
            }
        }
        (D::DoorsLockState, V::DoorLock(_))
        | (D::HoodPosition, V::Hood(_))
        | (D::BrakeFluidChangeDate, V::Date(_))
        | (D::AccelerationEvaluation | D::DrivingStyle, V::Opaque(_)) => {}
        (_, other) => {
            return Err(SampleError::WrongValueType { kind, value: value_name(other) });
        }
    }
    Ok(())
}

/// One timestamped data-point observation: a row of the time-series store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample")]
pub struct TelemetrySample {
    pub vin: Vin,
    pub kind: DataPointKind,
    pub value: SampleValue,
    #[serde(with = "time::rfc3339")]
    pub observed_at: Timestamp,
    pub source: SampleSource,
}

#[derive(Deserialize)]
struct RawSample {
    vin: Vin,
    kind: DataPointKind,
    value: SampleValue,
    #[serde(with = "time::rfc3339")]
    observed_at: Timestamp,
    source: SampleSource,
}

impl TryFrom<RawSample> for TelemetrySample {
    type Error = SampleError;

    fn try_from(r: RawSample) -> Result<Self, Self::Error> {
        TelemetrySample::new(r.vin, r.kind, r.value, r.observed_at, r.source)
    }
}

impl TelemetrySample {
    pub fn new(
        vin: Vin,
        kind: DataPointKind,
        value: SampleValue,
        observed_at: Timestamp,
        source: SampleSource,
    ) -> Result<Self, SampleError> {
        validate_value(kind, &value)?;
        Ok(Self { vin, kind, value, observed_at: time::to_millis(observed_at), source })
    }
}

/// Webhook payload pushed by the OEM through the aggregator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NotificationEvent {
    pub vin: Vin,
    pub kind: NotificationKind,
    #[serde(with = "time::rfc3339")]
    pub emitted_at: Timestamp,
    pub delivery_id: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn vin() -> Vin {
        Vin::parse("WBAXXXXXXXX123456").unwrap()
    }

    fn at() -> Timestamp {
        Utc.with_ymd_and_hms(2022, 2, 15, 8, 0, 0).unwrap()
    }

    #[test]
    fn rejects_mismatched_units() {
        let err = TelemetrySample::new(
            vin(),
            DataPointKind::Odometer,
            SampleValue::Liters(40.0),
            at(),
            SampleSource::Request,
        )
        .unwrap_err();
        assert!(matches!(err, SampleError::WrongValueType { .. }));
    }

    #[test]
    fn range_checks() {
        let bad = [
            (DataPointKind::Odometer, SampleValue::Kilometers(-1.0)),
            (DataPointKind::GpsCoordinates, SampleValue::Position(Position::new(91.0, 0.0))),
            (DataPointKind::GpsCoordinates, SampleValue::Position(Position::new(0.0, -180.5))),
            (DataPointKind::Heading, SampleValue::Degrees(360.0)),
            (DataPointKind::FuelVolume, SampleValue::Liters(f64::NAN)),
        ];
        for (kind, value) in bad {
            assert!(
                matches!(validate_value(kind, &value), Err(SampleError::OutOfRange { .. })),
                "{kind} {value:?}"
            );
        }
        assert!(validate_value(DataPointKind::Heading, &SampleValue::Degrees(359.9)).is_ok());
        assert!(validate_value(
            DataPointKind::DistanceToNextMaintenance,
            &SampleValue::Kilometers(-120.0)
        )
        .is_ok());
    }

    #[test]
    fn json_shape() {
        let s = TelemetrySample::new(
            vin(),
            DataPointKind::GpsCoordinates,
            SampleValue::Position(Position::new(49.6, 6.12)),
            at(),
            SampleSource::Request,
        )
        .unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"vin":"WBAXXXXXXXX123456","kind":"gps_coordinates","value":{"position":{"lat":49.6,"lon":6.12}},"observed_at":"2022-02-15T08:00:00.000Z","source":"request"}"#
        );
        let bad = json.replace("49.6", "149.6");
        assert!(serde_json::from_str::<TelemetrySample>(&bad).is_err());
    }
}
