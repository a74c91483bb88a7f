use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{eligibility_report, EligibilityError, EligibilityReport, EligibilityService, VinCheckMethod};
use crate::domain::{BrandId, ProfileRegistry, Vehicle, Vin};
use crate::time::Timestamp;

/// A fleet with the OEM-side VIN eligibility table that answers its VIN checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetFixture {
    pub name: String,
    pub vehicles: Vec<Vehicle>,
    /// Cars meeting every requirement except the production year.
    #[serde(default)]
    pub off_year_vehicles: Vec<Vehicle>,
    pub oem_eligibility: BTreeMap<Vin, bool>,
    pub vin_check_methods: BTreeMap<BrandId, VinCheckMethod>,
}

impl FleetFixture {
    pub fn from_json(raw: &str) -> Result<Self, EligibilityError> {
        serde_json::from_str(raw).map_err(|e| EligibilityError::Config(e.to_string()))
    }

    /// The 19 cars that pass the requirement check, two off-year cars aside.
    pub fn fleet19() -> Self {
        Self::from_json(include_str!("../../fixtures/fleet19.json")).expect("builtin fixture parses")
    }

    pub fn named(name: &str) -> Result<Self, EligibilityError> {
        match name {
            // Second spelling kept for operator scripts that use it.
            "fleet19" | "paper19" => Ok(Self::fleet19()),
            other => Err(EligibilityError::Config(format!("unknown fixture {other:?}"))),
        }
    }

    pub fn method_for(&self, brand: &BrandId) -> VinCheckMethod {
        self.vin_check_methods.get(brand).copied().unwrap_or(VinCheckMethod::AutomaticApi)
    }

    /// Runs both eligibility steps over the fleet against its own OEM table.
    pub fn report(&self, registry: &ProfileRegistry, start: Timestamp) -> Result<EligibilityReport, EligibilityError> {
        let outcomes = EligibilityService::default().run_to_completion(&self.vehicles, |b| self.method_for(b), self, start)?;
        eligibility_report(&self.vehicles, &outcomes, registry)
    }

    pub fn with_off_year(&self) -> Vec<Vehicle> {
        self.vehicles.iter().chain(&self.off_year_vehicles).cloned().collect()
    }
}
