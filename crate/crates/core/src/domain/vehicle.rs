use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::profile::BrandId;
use super::vin::Vin;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vehicle {
    pub vin: Vin,
    pub brand: BrandId,
    pub model: String,
    pub production_year: i32,
    /// ISO 3166-1 alpha-2 code of the country of purchase.
    pub purchase_country: String,
    pub fidelity_program_member: bool,
    /// Vehicle-local time zone for poll slots and night windows.
    #[serde(default = "default_tz")]
    pub tz: Tz,
}

fn default_tz() -> Tz {
    crate::time::DEFAULT_TZ
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Driver {
    pub email: String,
    #[serde(default)]
    pub name: Option<String>,
}

/// Minimal structural check: one `@`, non-empty local part, dotted domain.
pub fn is_plausible_email(raw: &str) -> bool {
    let Some((local, domain)) = raw.split_once('@') else {
        return false;
    };
    !local.is_empty()
        && !domain.contains('@')
        && domain.contains('.')
        && !domain.starts_with('.')
        && !domain.ends_with('.')
        && !raw.chars().any(char::is_whitespace)
}


/// Road category carried by trip legs and speed-limit map segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadClass {
    Urban,
    Rural,
    Highway,
}

impl RoadClass {
    pub const ALL: [RoadClass; 3] = [RoadClass::Urban, RoadClass::Rural, RoadClass::Highway];

    pub fn as_str(self) -> &'static str {
        match self {
            RoadClass::Urban => "urban",
            RoadClass::Rural => "rural",
            RoadClass::Highway => "highway",
        }
    }
}

impl std::str::FromStr for RoadClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "urban" => Ok(RoadClass::Urban),
            "rural" => Ok(RoadClass::Rural),
            "highway" => Ok(RoadClass::Highway),
            other => Err(format!("unknown road class {other:?}")),
        }
    }
}
