//! Two-step eligibility pipeline: a declarative requirement check, then a VIN
//! check answered by the OEM, either automatically or after a manual review.

mod fixture;
mod rules;

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BrandId, ProfileRegistry, Vehicle, Vin};
use crate::time::{self, Timestamp};

pub use fixture::FleetFixture;
pub use rules::{requirement_check, RequirementClause, RequirementRule, RuleSet, DEFAULT_MIN_PRODUCTION_YEAR};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EligibilityError {
    #[error("no requirement rule for brand {0}")]
    NoRuleForBrand(BrandId),
    #[error("requirement check has not passed for {0}")]
    RequirementNotChecked(Vin),
    #[error("VIN {0} is unknown to the OEM")]
    UnknownVinAtOem(Vin),
    #[error("{0} VIN checks are still pending")]
    PendingChecksRemain(usize),
    #[error("eligibility config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VinCheckMethod {
    AutomaticApi,
    ManualReview,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VinCheckStatus {
    /// The requirement check failed, so no VIN check is attempted.
    NotAttempted,
    Pending,
    Eligible,
    NotEligible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityOutcome {
    pub vin: Vin,
    pub requirement_ok: bool,
    pub vin_check: VinCheckStatus,
    #[serde(with = "time::rfc3339")]
    pub checked_at: Timestamp,
    pub method: Option<VinCheckMethod>,
    /// When a pending manual review resolves.
    #[serde(default, with = "time::rfc3339::option")]
    pub resolves_at: Option<Timestamp>,
}

impl EligibilityOutcome {
    pub fn is_eligible(&self) -> bool {
        self.vin_check == VinCheckStatus::Eligible
    }

    /// Sequencing invariant: a VIN check only ever follows a passed requirement check.
    pub fn is_consistent(&self) -> bool {
        self.requirement_ok == (self.vin_check != VinCheckStatus::NotAttempted)
    }
}

/// OEM-side answer to a VIN check. `None` means the OEM does not know the VIN.
pub trait VinLookup {
    fn lookup_vin(&self, vin: &Vin) -> Option<bool>;
}

impl VinLookup for BTreeMap<Vin, bool> {
    fn lookup_vin(&self, vin: &Vin) -> Option<bool> {
        self.get(vin).copied()
    }
}

impl VinLookup for FleetFixture {
    fn lookup_vin(&self, vin: &Vin) -> Option<bool> {
        self.oem_eligibility.lookup_vin(vin)
    }
}

/// How long a manual review takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewDelay {
    /// Whole business days (Saturday and Sunday skipped), same time of day.
    BusinessDays(u32),
    Seconds(i64),
}

impl Default for ReviewDelay {
    fn default() -> Self {
        ReviewDelay::BusinessDays(2)
    }
}

impl ReviewDelay {
    pub fn resolve_time(&self, from: Timestamp) -> Timestamp {
        match *self {
            ReviewDelay::Seconds(s) => from + Duration::seconds(s.max(0)),
            ReviewDelay::BusinessDays(n) => {
                let mut t = from;
                let mut left = n;
                while left > 0 {
                    t += Duration::days(1);
                    if !matches!(t.weekday(), Weekday::Sat | Weekday::Sun) {
                        left -= 1;
                    }
                }
                t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityService {
    pub rules: RuleSet,
    pub review_delay: ReviewDelay,
}

impl EligibilityService {
    pub fn new(rules: RuleSet, review_delay: ReviewDelay) -> Self {
        Self { rules, review_delay }
    }

    /// First step. A failed requirement check closes the pipeline for the VIN.
    pub fn check_requirements(&self, vehicle: &Vehicle, now: Timestamp) -> Result<EligibilityOutcome, EligibilityError> {
        let ok = requirement_check(vehicle, &self.rules)?;
        Ok(EligibilityOutcome {
            vin: vehicle.vin.clone(),
            requirement_ok: ok,
            vin_check: if ok { VinCheckStatus::Pending } else { VinCheckStatus::NotAttempted },
            checked_at: time::to_millis(now),
            method: None,
            resolves_at: None,
        })
    }

    /// Second step. Automatic checks resolve immediately; manual reviews stay
    /// pending until [`EligibilityService::resolve_pending`] runs past their
    /// resolution time.
    pub fn vin_check(
        &self,
        prior: Option<&EligibilityOutcome>,
        vin: &Vin,
        method: VinCheckMethod,
        oem: &dyn VinLookup,
        now: Timestamp,
    ) -> Result<EligibilityOutcome, EligibilityError> {
        let prior = prior
            .filter(|o| o.requirement_ok && &o.vin == vin)
            .ok_or_else(|| EligibilityError::RequirementNotChecked(vin.clone()))?;
        let answer = oem.lookup_vin(vin).ok_or_else(|| EligibilityError::UnknownVinAtOem(vin.clone()))?;
        let mut out = prior.clone();
        out.method = Some(method);
        out.checked_at = time::to_millis(now);
        match method {
            VinCheckMethod::AutomaticApi => {
                out.vin_check = if answer { VinCheckStatus::Eligible } else { VinCheckStatus::NotEligible };
                out.resolves_at = None;
            }
            VinCheckMethod::ManualReview => {
                out.vin_check = VinCheckStatus::Pending;
                out.resolves_at = Some(time::to_millis(self.review_delay.resolve_time(now)));
            }
        }
        Ok(out)
    }

    /// Resolves a due manual review exactly once. Returns `None` when nothing changes.
    pub fn resolve_pending(
        &self,
        outcome: &EligibilityOutcome,
        oem: &dyn VinLookup,
        now: Timestamp,
    ) -> Option<EligibilityOutcome> {
        if outcome.vin_check != VinCheckStatus::Pending || outcome.method != Some(VinCheckMethod::ManualReview) {
            return None;
        }
        let due = outcome.resolves_at?;
        if now < due {
            return None;
        }
        let mut out = outcome.clone();
        out.vin_check = match oem.lookup_vin(&outcome.vin) {
            Some(true) => VinCheckStatus::Eligible,
            _ => VinCheckStatus::NotEligible,
        };
        out.checked_at = due;
        Some(out)
    }

    /// Runs both steps for every vehicle, resolving manual reviews by jumping
    /// to their resolution time. Returns the outcomes and the time the last
    /// review completed.
    pub fn run_to_completion(
        &self,
        fleet: &[Vehicle],
        method_for: impl Fn(&BrandId) -> VinCheckMethod,
        oem: &dyn VinLookup,
        start: Timestamp,
    ) -> Result<BTreeMap<Vin, EligibilityOutcome>, EligibilityError> {
        let mut outcomes = BTreeMap::new();
        for v in fleet {
            let mut o = self.check_requirements(v, start)?;
            if o.requirement_ok {
                o = self.vin_check(Some(&o), &v.vin, method_for(&v.brand), oem, start)?;
                if let Some(due) = o.resolves_at {
                    o = self.resolve_pending(&o, oem, due).unwrap_or(o);
                }
            }
            outcomes.insert(v.vin.clone(), o);
        }
        Ok(outcomes)
    }
}

impl Default for EligibilityService {
    fn default() -> Self {
        Self::new(RuleSet::builtin(), ReviewDelay::default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrandEligibility {
    pub brand: BrandId,
    pub display_name: String,
    pub vehicles: usize,
    pub requirements_passed: usize,
    pub vin_check_passed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityReport {
    pub rows: Vec<BrandEligibility>,
}

impl EligibilityReport {
    pub fn row(&self, brand: &str) -> Option<&BrandEligibility> {
        let id = BrandId::new(brand);
        self.rows.iter().find(|r| r.brand == id)
    }

    pub fn counts(&self) -> BTreeMap<String, (usize, usize)> {
        self.rows
            .iter()
            .map(|r| (r.brand.as_str().to_string(), (r.requirements_passed, r.vin_check_passed)))
            .collect()
    }

    pub fn totals(&self) -> (usize, usize) {
        self.rows
            .iter()
            .fold((0, 0), |(a, b), r| (a + r.requirements_passed, b + r.vin_check_passed))
    }
}

/// Per-brand counts of requirement and VIN check passes.
pub fn eligibility_report(
    fleet: &[Vehicle],
    outcomes: &BTreeMap<Vin, EligibilityOutcome>,
    registry: &ProfileRegistry,
) -> Result<EligibilityReport, EligibilityError> {
    let pending = fleet
        .iter()
        .filter(|v| match outcomes.get(&v.vin) {
            None => true,
            Some(o) => o.vin_check == VinCheckStatus::Pending,
        })
        .count();
    if pending > 0 {
        return Err(EligibilityError::PendingChecksRemain(pending));
    }
    let mut rows: BTreeMap<BrandId, BrandEligibility> = BTreeMap::new();
    for v in fleet {
        let o = &outcomes[&v.vin];
        let row = rows.entry(v.brand.clone()).or_insert_with(|| BrandEligibility {
            brand: v.brand.clone(),
            display_name: registry
                .get(&v.brand)
                .map(|p| p.display_name.clone())
                .unwrap_or_else(|| v.brand.to_string()),
            vehicles: 0,
            requirements_passed: 0,
            vin_check_passed: 0,
        });
        row.vehicles += 1;
        row.requirements_passed += usize::from(o.requirement_ok);
        row.vin_check_passed += usize::from(o.is_eligible());
    }
    Ok(EligibilityReport { rows: rows.into_values().collect() })
}
