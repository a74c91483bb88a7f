use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EligibilityError;
use crate::domain::{BrandId, Vehicle};

/// Lowest production year accepted by default: the eCall mandate date.
pub const DEFAULT_MIN_PRODUCTION_YEAR: i32 = 2018;

fn default_min_year() -> i32 {
    DEFAULT_MIN_PRODUCTION_YEAR
}

/// One OEM-published connectability requirement. `allowed_models` may contain
/// the wildcard `*`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementRule {
    pub brand: BrandId,
    pub allowed_models: BTreeSet<String>,
    #[serde(default = "default_min_year")]
    pub min_production_year: i32,
    pub allowed_countries: BTreeSet<String>,
    #[serde(default)]
    pub requires_fidelity_program: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementClause {
    Model,
    ProductionYear,
    Country,
    FidelityProgram,
}

impl RequirementRule {
    /// Clauses of this rule the vehicle fails; empty means the rule matches.
    pub fn failed_clauses(&self, v: &Vehicle) -> Vec<RequirementClause> {
        let mut failed = Vec::new();
        let model_ok = self.allowed_models.contains("*")
            || self.allowed_models.iter().any(|m| m.eq_ignore_ascii_case(v.model.trim()));
        if !model_ok {
            failed.push(RequirementClause::Model);
        }
        if v.production_year < self.min_production_year {
            failed.push(RequirementClause::ProductionYear);
        }
        if !self
            .allowed_countries
            .iter()
            .any(|c| c.eq_ignore_ascii_case(v.purchase_country.trim()))
        {
            failed.push(RequirementClause::Country);
        }
        if self.requires_fidelity_program && !v.fidelity_program_member {
            failed.push(RequirementClause::FidelityProgram);
        }
        failed
    }

    pub fn matches(&self, v: &Vehicle) -> bool {
        self.failed_clauses(v).is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<RequirementRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<RequirementRule>) -> Self {
        Self { rules }
    }

    pub fn from_json(raw: &str) -> Result<Self, EligibilityError> {
        let mut set: RuleSet =
            serde_json::from_str(raw).map_err(|e| EligibilityError::Config(e.to_string()))?;
        for r in &mut set.rules {
            r.brand = BrandId::new(r.brand.as_str());
        }
        Ok(set)
    }

    /// Rules shipped with the eligibility fixture.
    pub fn builtin() -> Self {
        Self::from_json(include_str!("../../fixtures/rules.json")).expect("builtin rules parse")
    }

    pub fn for_brand<'a>(&'a self, brand: &'a BrandId) -> impl Iterator<Item = &'a RequirementRule> + 'a {
        self.rules.iter().filter(move |r| &r.brand == brand)
    }
}

/// True iff some rule for the vehicle's brand matches every clause.
pub fn requirement_check(vehicle: &Vehicle, rules: &RuleSet) -> Result<bool, EligibilityError> {
    let mut any = false;
    for rule in rules.for_brand(&vehicle.brand) {
        any = true;
        if rule.matches(vehicle) {
            return Ok(true);
        }
    }
    if any {
        Ok(false)
    } else {
        Err(EligibilityError::NoRuleForBrand(vehicle.brand.clone()))
    }
}
