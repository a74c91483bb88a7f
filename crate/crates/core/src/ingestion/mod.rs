//! Platform side of data collection: the signed webhook receiver, the
//! quota-aware request client and the odometer poll scheduler.
//!
//! [`Collector`] holds no stores of its own; every operation receives the
//! static and series stores plus the upstream [`Aggregator`](crate::simulator::Aggregator)
//! and the current simulated instant.

mod collector;
mod metrics;
mod policy;
mod schedule;
mod vault;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{NotificationKind, Vin};
use crate::simulator::{ApiError, OAuthError};
use crate::storage::StorageError;
use crate::time::{self, Timestamp};

pub use crate::analytics::nightly_distance_from_polls;
pub use collector::{
    consent_gate_violations,
    Collector, CollectorConfig, PendingRequest, RawDelivery, RequestTrigger, SlotOutcome, SlotRecord, WebhookHeaders,
};
pub use metrics::Metrics;
pub use policy::{CollectionMode, CollectionPolicy, PolicySet};
pub use schedule::{slot_is_missed, slots_between};
pub use vault::{StoredGrant, TokenVault};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown brand {0:?}")]
    UnknownBrand(String),
    #[error("missing header {0}")]
    MissingHeader(&'static str),
    #[error("malformed webhook payload: {0}")]
    Malformed(String),
    #[error("collection policy: {0}")]
    Policy(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum RequestError {
    #[error("consent for {0} does not permit collection")]
    ConsentInactive(Vin),
    #[error("vehicle {0} is not enrolled")]
    UnknownVehicle(Vin),
    #[error("local quota exhausted until {until}")]
    QuotaDeferred {
        #[serde(with = "time::rfc3339")]
        until: Timestamp,
    },
    #[error("no stored credentials for {0}")]
    NoCredentials(Vin),
    #[error("token refresh failed: {0}")]
    Token(OAuthError),
    #[error("upstream: {0}")]
    Upstream(ApiError),
    #[error("storage: {0}")]
    Storage(String),
}

impl RequestError {
    /// Worth another attempt after a backoff.
    pub fn is_transient(&self) -> bool {
        matches!(self, RequestError::Upstream(ApiError::Unavailable | ApiError::QuotaExceeded { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Stored,
    TriggeredRequest,
    IgnoredDuplicate,
    RejectedBadSignature,
    /// Authentic delivery for a VIN the platform does not know.
    Quarantined,
    /// Authentic delivery for a VIN whose consent does not permit collection.
    SkippedNoConsent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub delivery_id: String,
    /// Absent when the payload could not be read.
    pub vin: Option<Vin>,
    pub kind: Option<NotificationKind>,
    #[serde(with = "time::rfc3339")]
    pub received_at: Timestamp,
    pub disposition: Disposition,
}

impl DeliveryRecord {
    /// HTTP status the receiver answers with.
    pub fn http_status(&self) -> u16 {
        match self.disposition {
            Disposition::RejectedBadSignature => 401,
            Disposition::Quarantined => 202,
            _ => 200,
        }
    }
}

#[cfg(test)]
mod tests;
