//! Stand-in for OEM clouds behind a single aggregator: OAuth grants, the
//! quota-limited data API, signed webhook emission and synthetic trips.
//!
//! The simulator has no clock of its own. Every operation takes the current
//! simulated instant, so behaviour is a pure function of configuration, seed
//! and call schedule.

mod oauth;
pub mod presets;
mod trace;
mod vehicle;
mod webhook;

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::consent::TransmissionTestRun;
use crate::domain::{
    BrandId, DataPointKind, NotificationEvent, NotificationKind, PrivacyMechanism, ProfileError, ProfileRegistry,
    SampleSource, TelemetrySample, Vin,
};
use crate::eligibility::VinLookup;
use crate::quota::QuotaLedger;
use crate::time::{self, Timestamp};

pub use oauth::{AccessTokenGrant, AuthServer, GrantRequest, OAuthError, TokenCheck, DEFAULT_ACCESS_TTL_SECS};
pub use trace::{
    destination, generate_day, generate_trace, read_trace, trip_is_inside, write_trace, Leg, LengthDistribution,
    RoadShare, SpeedProfile, TraceError, TracePoint, TraceSpec, Trip, TripCount, TripModel, EARTH_RADIUS_KM,
};
pub use vehicle::{FaultPlan, OutageWindow, ScriptedEvent, SimVehicle, SimVehicleConfig, VehicleState};
pub use webhook::{
    AttemptRecord, DeadLetter, RetryPolicy, SinkResponse, WebhookDelivery, WebhookDispatcher, WebhookSink,
    DELIVERY_ID_HEADER, SIGNATURE_HEADER,
};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ApiError {
    #[error("access token missing, expired, revoked or issued for another vehicle")]
    Unauthorized,
    #[error("data point {kind} is not offered for this vehicle")]
    UnsupportedKind { kind: DataPointKind },
    #[error("request quota exhausted, retry after {retry_after_secs} s")]
    QuotaExceeded { retry_after_secs: i64 },
    #[error("OEM API temporarily unavailable")]
    Unavailable,
    #[error("unknown vehicle")]
    UnknownVehicle,
}

impl ApiError {
    pub fn http_status(&self) -> u16 {
        match self {
            ApiError::Unauthorized => 401,
            ApiError::UnsupportedKind { .. } => 400,
            ApiError::QuotaExceeded { .. } => 429,
            ApiError::Unavailable => 503,
            ApiError::UnknownVehicle => 404,
        }
    }
}

/// Upstream surface the platform talks to: in-process simulator or HTTP client.
pub trait Aggregator {
    fn token_exchange(&mut self, request: &GrantRequest, now: Timestamp) -> Result<AccessTokenGrant, OAuthError>;

    fn fetch_data(
        &mut self,
        vin: &Vin,
        kinds: &BTreeSet<DataPointKind>,
        access_token: &str,
        now: Timestamp,
    ) -> Result<Vec<TelemetrySample>, ApiError>;
}

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("duplicate vehicle {0}")]
    DuplicateVehicle(Vin),
    #[error("unknown vehicle {0}")]
    UnknownVehicle(Vin),
}

fn default_access_ttl() -> i64 {
    DEFAULT_ACCESS_TTL_SECS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    #[serde(with = "time::rfc3339")]
    pub epoch: Timestamp,
    pub vehicles: Vec<SimVehicleConfig>,
    /// Shared HMAC secret per brand. Missing brands get a derived secret.
    #[serde(default)]
    pub webhook_secrets: BTreeMap<String, String>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_access_ttl")]
    pub access_ttl_secs: i64,
    /// OEM-side answer to VIN eligibility checks. Vehicles absent here are eligible.
    #[serde(default)]
    pub vin_eligibility: BTreeMap<Vin, bool>,
}

impl SimulationConfig {
    pub fn new(seed: u64, epoch: Timestamp, vehicles: Vec<SimVehicleConfig>) -> Self {
        Self {
            seed,
            epoch,
            vehicles,
            webhook_secrets: BTreeMap::new(),
            retry: RetryPolicy::default(),
            access_ttl_secs: DEFAULT_ACCESS_TTL_SECS,
            vin_eligibility: BTreeMap::new(),
        }
    }
}

/// Secret used when a brand has none configured.
pub fn derived_webhook_secret(brand: &BrandId) -> String {
    format!("whsec-{}", brand.as_str())
}

/// One data API call as seen by the OEM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCall {
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
    pub vin: Vin,
    pub kinds: BTreeSet<DataPointKind>,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulator {
    registry: ProfileRegistry,
    seed: u64,
    #[serde(with = "time::rfc3339")]
    epoch: Timestamp,
    vehicles: BTreeMap<Vin, SimVehicle>,
    secrets: BTreeMap<BrandId, String>,
    vin_eligibility: BTreeMap<Vin, bool>,
    auth: AuthServer,
    dispatcher: WebhookDispatcher,
    #[serde(with = "time::rfc3339")]
    emitted_until: Timestamp,
    data_calls: Vec<DataCall>,
    token_calls: u64,
    emitted: u64,
}

impl Simulator {
    pub fn new(config: SimulationConfig, registry: ProfileRegistry) -> Result<Self, SimulatorError> {
        let mut secrets = BTreeMap::new();
        for (brand, secret) in &config.webhook_secrets {
            secrets.insert(registry.resolve(brand)?.clone(), secret.clone());
        }
        let mut sim = Self {
            seed: config.seed,
            epoch: config.epoch,
            vehicles: BTreeMap::new(),
            secrets,
            vin_eligibility: config.vin_eligibility,
            auth: AuthServer::new(config.seed, config.access_ttl_secs),
            dispatcher: WebhookDispatcher::new(config.retry),
            emitted_until: config.epoch,
            data_calls: Vec::new(),
            token_calls: 0,
            emitted: 0,
            registry,
        };
        for v in config.vehicles {
            sim.add_vehicle(v)?;
        }
        Ok(sim)
    }

    pub fn add_vehicle(&mut self, config: SimVehicleConfig) -> Result<(), SimulatorError> {
        config.validate()?;
        if self.vehicles.contains_key(&config.vin) {
            return Err(SimulatorError::DuplicateVehicle(config.vin));
        }
        let profile = self.registry.profile_for(&config.profile)?;
        let brand = profile.brand.clone();
        let quota = QuotaLedger::new(profile.request_quota, config.tz);
        let vin = config.vin.clone();
        let v = SimVehicle::new(config, brand, quota, self.seed, self.epoch);
        self.vehicles.insert(vin, v);
        Ok(())
    }

    pub fn registry(&self) -> &ProfileRegistry {
        &self.registry
    }

    pub fn epoch(&self) -> Timestamp {
        self.epoch
    }

    pub fn vehicle(&self, vin: &Vin) -> Option<&SimVehicle> {
        self.vehicles.get(vin)
    }

    pub fn vehicle_mut(&mut self, vin: &Vin) -> Option<&mut SimVehicle> {
        self.vehicles.get_mut(vin)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &SimVehicle> {
        self.vehicles.values()
    }

    pub fn webhook_secret(&self, brand: &BrandId) -> String {
        self.secrets.get(brand).cloned().unwrap_or_else(|| derived_webhook_secret(brand))
    }

    fn vehicle_or_err(&mut self, vin: &Vin) -> Result<&mut SimVehicle, SimulatorError> {
        self.vehicles.get_mut(vin).ok_or_else(|| SimulatorError::UnknownVehicle(vin.clone()))
    }

    /// Replaces a vehicle's fault plan.
    pub fn apply_fault_plan(&mut self, vin: &Vin, plan: FaultPlan) -> Result<(), SimulatorError> {
        self.vehicle_or_err(vin)?.config.fault_plan = plan;
        Ok(())
    }

    /// OEM portal approval: issues an authorization code and starts notifications.
    pub fn approve_data_sharing(&mut self, vin: &Vin, now: Timestamp) -> Result<String, SimulatorError> {
        self.vehicle_or_err(vin)?.sharing = true;
        Ok(self.auth.issue_code(vin, now))
    }

    /// Driver revokes on the OEM side: credentials die and a revoke notification is queued.
    pub fn revoke_at_oem(&mut self, vin: &Vin, now: Timestamp) -> Result<NotificationEvent, SimulatorError> {
        self.vehicle_or_err(vin)?;
        let event = self.make_event(vin, NotificationKind::RevokeOfConsent, now);
        self.deliver_event(&event, now);
        Ok(event)
    }

    pub fn privacy_mechanism(&self, vin: &Vin) -> Option<PrivacyMechanism> {
        self.vehicles.get(vin).map(|v| v.config.privacy_mechanism)
    }

    /// Runs the in-car transmission test, which takes the configured duration.
    pub fn run_transmission_test(
        &mut self,
        vin: &Vin,
        started_at: Timestamp,
        duration_secs: i64,
    ) -> Result<TransmissionTestRun, SimulatorError> {
        let v = self.vehicle_or_err(vin)?;
        v.transmission_tests_run += 1;
        let succeeded = v.transmission_tests_run > v.config.fault_plan.transmission_test_failures;
        Ok(TransmissionTestRun { started_at, finished_at: started_at + Duration::seconds(duration_secs), succeeded })
    }

    /// Completed trips in `[from, to]`.
    pub fn trips_between(&mut self, vin: &Vin, from: Timestamp, to: Timestamp) -> Result<Vec<Trip>, SimulatorError> {
        Ok(self.vehicle_or_err(vin)?.trips_between(from, to).into_iter().cloned().collect())
    }

    fn make_event(&self, vin: &Vin, kind: NotificationKind, at: Timestamp) -> NotificationEvent {
        let at = time::to_millis(at);
        let mut h = Sha256::new();
        h.update(vin.as_str());
        h.update(kind.as_str());
        h.update(time::format_rfc3339(&at));
        let digest = h.finalize();
        NotificationEvent { vin: vin.clone(), kind, emitted_at: at, delivery_id: format!("dlv_{}", hex::encode(&digest[..12])) }
    }

    fn deliver_event(&mut self, event: &NotificationEvent, now: Timestamp) {
        let Some(v) = self.vehicles.get_mut(&event.vin) else {
            return;
        };
        let brand = v.brand.clone();
        if event.kind == NotificationKind::RevokeOfConsent {
            v.sharing = false;
            self.auth.revoke(&event.vin);
        }
        let secret = self.webhook_secret(&brand);
        self.dispatcher.enqueue(WebhookDelivery::sign(&brand, event, secret.as_bytes()), now);
        self.emitted += 1;
    }

    /// Emits every notification in `(last emission horizon, to]` into the dispatcher.
    pub fn emit_notifications(&mut self, to: Timestamp) -> Vec<NotificationEvent> {
        if to <= self.emitted_until {
            return Vec::new();
        }
        let from = self.emitted_until;
        let mut due: Vec<(Timestamp, Vin, NotificationKind)> = Vec::new();
        for (vin, v) in self.vehicles.iter_mut() {
            let supported = match self.registry.get(&v.brand) {
                Some(p) => p.notification_kinds.clone(),
                None => continue,
            };
            due.extend(v.emissions(from, to, &supported).into_iter().map(|(at, k)| (at, vin.clone(), k)));
        }
        due.sort();
        let mut out = Vec::with_capacity(due.len());
        for (at, vin, kind) in due {
            // A revoke earlier in this batch stops the vehicle's later notifications.
            let sharing = self.vehicles.get(&vin).is_some_and(|v| v.sharing);
            if !sharing && kind != NotificationKind::RevokeOfConsent {
                continue;
            }
            let event = self.make_event(&vin, kind, at);
            self.deliver_event(&event, at);
            out.push(event);
        }
        self.emitted_until = to;
        out
    }

    /// Earliest pending simulator activity (emission or delivery retry) in `(after, until]`.
    pub fn next_activity(&mut self, after: Timestamp, until: Timestamp) -> Option<Timestamp> {
        let from = after.max(self.emitted_until);
        let mut best = self.dispatcher.next_due().map(|d| d.max(after));
        for v in self.vehicles.values_mut() {
            let Some(p) = self.registry.get(&v.brand) else { continue };
            let supported = p.notification_kinds.clone();
            let horizon = best.map_or(until, |b| b.min(until));
            if let Some(t) = v.next_emission(from, horizon, &supported) {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        }
        best.filter(|b| *b <= until)
    }

    /// Attempts due webhook deliveries.
    pub fn pump_webhooks(&mut self, now: Timestamp, sink: &mut dyn WebhookSink) -> u64 {
        self.dispatcher.pump(now, sink)
    }

    pub fn dispatcher(&self) -> &WebhookDispatcher {
        &self.dispatcher
    }

    pub fn data_calls(&self) -> &[DataCall] {
        &self.data_calls
    }

    pub fn token_calls(&self) -> u64 {
        self.token_calls
    }

    pub fn emitted_count(&self) -> u64 {
        self.emitted
    }

    fn log_call(&mut self, vin: &Vin, kinds: &BTreeSet<DataPointKind>, now: Timestamp, status: u16) {
        self.data_calls.push(DataCall { at: now, vin: vin.clone(), kinds: kinds.clone(), status });
    }

    fn serve_data(
        &mut self,
        vin: &Vin,
        kinds: &BTreeSet<DataPointKind>,
        access_token: &str,
        now: Timestamp,
    ) -> Result<Vec<TelemetrySample>, ApiError> {
        let brand = self.vehicles.get(vin).ok_or(ApiError::UnknownVehicle)?.brand.clone();
        if self.auth.check(access_token, vin, &BTreeSet::new(), now) != TokenCheck::Valid {
            return Err(ApiError::Unauthorized);
        }
        let profile = self.registry.get(&brand).ok_or(ApiError::UnknownVehicle)?;
        if let Some(kind) = kinds.iter().find(|k| !profile.supports_request(**k)) {
            return Err(ApiError::UnsupportedKind { kind: *kind });
        }
        if self.auth.check(access_token, vin, kinds, now) != TokenCheck::Valid {
            return Err(ApiError::Unauthorized);
        }
        let v = self.vehicles.get_mut(vin).expect("checked above");
        if v.config.fault_plan.in_outage(now) {
            return Err(ApiError::Unavailable);
        }
        if !v.quota.try_acquire(now) {
            let retry_after_secs = (v.quota.next_available(now) - now).num_seconds().max(1);
            return Err(ApiError::QuotaExceeded { retry_after_secs });
        }
        let mut out = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let value = v.value(*kind, now);
            let sample = TelemetrySample::new(vin.clone(), *kind, value, now, SampleSource::Request)
                .expect("simulated values respect their kind's unit and range");
            out.push(sample);
        }
        Ok(out)
    }
}

impl Aggregator for Simulator {
    fn token_exchange(&mut self, request: &GrantRequest, now: Timestamp) -> Result<AccessTokenGrant, OAuthError> {
        self.token_calls += 1;
        let scopes: BTreeMap<Vin, BTreeSet<DataPointKind>> = self
            .vehicles
            .iter()
            .map(|(vin, v)| {
                let scope = self.registry.get(&v.brand).map(|p| p.request_kinds.clone()).unwrap_or_default();
                (vin.clone(), scope)
            })
            .collect();
        self.auth.exchange(request, |vin| scopes.get(vin).cloned().unwrap_or_default(), now)
    }

    fn fetch_data(
        &mut self,
        vin: &Vin,
        kinds: &BTreeSet<DataPointKind>,
        access_token: &str,
        now: Timestamp,
    ) -> Result<Vec<TelemetrySample>, ApiError> {
        let result = self.serve_data(vin, kinds, access_token, now);
        let status = result.as_ref().map(|_| 200).unwrap_or_else(|e| e.http_status());
        self.log_call(vin, kinds, now, status);
        result
    }
}

impl VinLookup for Simulator {
    fn lookup_vin(&self, vin: &Vin) -> Option<bool> {
        if !self.vehicles.contains_key(vin) {
            return self.vin_eligibility.get(vin).copied();
        }
        Some(self.vin_eligibility.get(vin).copied().unwrap_or(true))
    }
}

#[cfg(test)]
mod tests;
