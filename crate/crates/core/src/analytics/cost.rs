//! Data-cost viability relative to the insurance premium.

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::scalar::Scalar;

pub const DEFAULT_VIABILITY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "viable")]
    Viable,
    #[serde(rename = "high-value-only")]
    HighValueOnly,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Viable => "viable",
            Verdict::HighValueOnly => "high-value-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostViability<T> {
    pub data_cost_eur_month: T,
    pub premium_eur_month: T,
    pub ratio: T,
    pub threshold: T,
    pub verdict: Verdict,
}

/// `ratio = cost / premium`; viable when the ratio does not exceed `threshold`.
pub fn cost_viability<T: Scalar>(data_cost: T, premium: T, threshold: T) -> Result<CostViability<T>, AnalyticsError> {
    if !(premium > T::zero()) || !premium.is_finite() {
        return Err(AnalyticsError::NonPositivePremium);
    }
    if !(data_cost >= T::zero()) || !data_cost.is_finite() {
        return Err(AnalyticsError::InvalidCost);
    }
    let ratio = data_cost / premium;
    let verdict = if ratio <= threshold { Verdict::Viable } else { Verdict::HighValueOnly };
    Ok(CostViability { data_cost_eur_month: data_cost, premium_eur_month: premium, ratio, threshold, verdict })
}
