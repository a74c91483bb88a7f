use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} {value:?}")]
pub struct UnknownKind {
    pub what: &'static str,
    pub value: String,
}

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident, $what:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownKind;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let wanted = s.trim().replace([' ', '-'], "_").to_ascii_lowercase();
                $name::ALL
                    .iter()
                    .copied()
                    .find(|k| k.as_str() == wanted)
                    .ok_or_else(|| UnknownKind { what: $what, value: s.to_string() })
            }
        }
    };
}

closed_enum!(
    /// Vehicle data points retrievable through the request flow.
    DataPointKind, "data point kind" {
        Odometer => "odometer",
        GpsCoordinates => "gps_coordinates",
        Heading => "heading",
        FuelVolume => "fuel_volume",
        DistanceToNextMaintenance => "distance_to_next_maintenance",
        DoorsLockState => "doors_lock_state",
        HoodPosition => "hood_position",
        OutsideTemperature => "outside_temperature",
        BrakeFluidChangeDate => "brake_fluid_change_date",
        AccelerationEvaluation => "acceleration_evaluation",
        DrivingStyle => "driving_style",
    }
);

closed_enum!(
    /// Events pushed by the OEM through the notification flow.
    NotificationKind, "notification kind" {
        AccidentReported => "accident_reported",
        BatteryWarning => "battery_warning",
        BreakdownReported => "breakdown_reported",
        EmergencyReported => "emergency_reported",
        EngineChanged => "engine_changed",
        MaintenanceChanged => "maintenance_changed",
        RevokeOfConsent => "revoke_of_consent",
        LocationChange => "location_change",
    }
);

impl NotificationKind {
    /// Whether a notification of this kind triggers a data request under the
    /// default collection policy.
    pub fn triggers_request_by_default(self) -> bool {
        matches!(self, NotificationKind::LocationChange)
    }

    /// Accident-like events counted as risk flags.
    pub fn is_incident(self) -> bool {
        matches!(
            self,
            NotificationKind::AccidentReported
                | NotificationKind::BreakdownReported
                | NotificationKind::EmergencyReported
        )
    }
}

/// Parses a comma separated list such as `odometer,gps_coordinates`.
pub fn parse_kind_list<K: FromStr<Err = UnknownKind> + Ord>(
    raw: &str,
) -> Result<std::collections::BTreeSet<K>, UnknownKind> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(K::from_str)
        .collect()
}
