use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StorageError;
use crate::consent::ConsentRecord;
use crate::domain::{Driver, ProfileRegistry, Vehicle, Vin};
use crate::eligibility::EligibilityOutcome;

/// Static information: drivers, vehicles, consents and eligibility outcomes.
/// Holds no telemetry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticRecordSet {
    drivers: BTreeMap<String, Driver>,
    vehicles: BTreeMap<Vin, Vehicle>,
    consents: BTreeMap<Vin, ConsentRecord>,
    eligibility: BTreeMap<Vin, EligibilityOutcome>,
}

impl StaticRecordSet {
    pub fn put_driver(&mut self, driver: Driver) {
        self.drivers.insert(driver.email.to_ascii_lowercase(), driver);
    }

    pub fn put_vehicle(&mut self, vehicle: Vehicle, registry: &ProfileRegistry) -> Result<(), StorageError> {
        if !registry.contains(&vehicle.brand) {
            return Err(StorageError::Integrity(format!(
                "vehicle {} has unregistered brand {}",
                vehicle.vin, vehicle.brand
            )));
        }
        self.vehicles.insert(vehicle.vin.clone(), vehicle);
        Ok(())
    }

    pub fn put_consent(&mut self, record: ConsentRecord) -> Result<(), StorageError> {
        if !self.vehicles.contains_key(&record.vin) {
            return Err(StorageError::Integrity(format!("consent for unknown vehicle {}", record.vin)));
        }
        self.drivers
            .entry(record.driver_email.to_ascii_lowercase())
            .or_insert_with(|| Driver { email: record.driver_email.clone(), name: None });
        self.consents.insert(record.vin.clone(), record);
        Ok(())
    }

    pub fn put_outcome(&mut self, outcome: EligibilityOutcome) -> Result<(), StorageError> {
        if !self.vehicles.contains_key(&outcome.vin) {
            return Err(StorageError::Integrity(format!(
                "eligibility outcome for unknown vehicle {}",
                outcome.vin
            )));
        }
        self.eligibility.insert(outcome.vin.clone(), outcome);
        Ok(())
    }

    pub fn driver(&self, email: &str) -> Option<&Driver> {
        self.drivers.get(&email.to_ascii_lowercase())
    }

    pub fn vehicle(&self, vin: &Vin) -> Option<&Vehicle> {
        self.vehicles.get(vin)
    }

    pub fn consent(&self, vin: &Vin) -> Option<&ConsentRecord> {
        self.consents.get(vin)
    }

    pub fn outcome(&self, vin: &Vin) -> Option<&EligibilityOutcome> {
        self.eligibility.get(vin)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles.values()
    }

    pub fn consents(&self) -> impl Iterator<Item = &ConsentRecord> {
        self.consents.values()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &EligibilityOutcome> {
        self.eligibility.values()
    }

    pub fn drivers(&self) -> impl Iterator<Item = &Driver> {
        self.drivers.values()
    }
}
