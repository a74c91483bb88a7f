use std::collections::{BTreeMap, BTreeSet, VecDeque};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::policy::{CollectionMode, PolicySet};
use super::schedule::{slot_is_missed, slots_between};
use super::vault::TokenVault;
use super::{DeliveryRecord, Disposition, IngestError, Metrics, RequestError};
use crate::consent::{ConsentPolicy, ConsentRecord, CredentialPair, RevocationSource};
use crate::domain::{
    BrandId, ConsentVariant, DataPointKind, NotificationEvent, NotificationKind, ProfileRegistry, SampleSource,
    TelemetrySample, Vin,
};
use crate::quota::QuotaLedger;
use crate::signing;
use crate::simulator::{derived_webhook_secret, Aggregator, GrantRequest, OAuthError, DELIVERY_ID_HEADER, SIGNATURE_HEADER};
use crate::storage::{SeriesStore, StaticRecordSet, StaticStore, StorageError, TimeRange};
use crate::time::{self, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectorConfig {
    pub tick_secs: i64,
    /// Widening of the local quota mirror's sliding window.
    pub quota_margin_ms: i64,
    pub max_upstream_retries: u32,
    pub upstream_backoff_secs: i64,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        Self { tick_secs: 60, quota_margin_ms: 1000, max_upstream_retries: 3, upstream_backoff_secs: 30 }
    }
}

/// Webhook headers, matched case-insensitively with `-` and `_` equivalent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebhookHeaders {
    pub delivery_id: Option<String>,
    pub signature: Option<String>,
}

impl WebhookHeaders {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut h = Self::default();
        for (name, value) in pairs {
            match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                DELIVERY_ID_HEADER => h.delivery_id = Some(value.trim().to_string()),
                SIGNATURE_HEADER => h.signature = Some(value.trim().to_string()),
                _ => {}
            }
        }
        h
    }
}

/// A webhook exactly as received, kept for replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDelivery {
    pub brand: String,
    pub headers: WebhookHeaders,
    pub body: String,
    #[serde(with = "time::rfc3339")]
    pub received_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "trigger", rename_all = "snake_case")]
pub enum RequestTrigger {
    Notification { delivery_id: String },
    Poll {
        #[serde(with = "time::rfc3339")]
        slot: Timestamp,
    },
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub vin: Vin,
    pub kinds: BTreeSet<DataPointKind>,
    pub trigger: RequestTrigger,
    #[serde(with = "time::rfc3339")]
    pub enqueued_at: Timestamp,
    #[serde(with = "time::rfc3339")]
    pub not_before: Timestamp,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOutcome {
    Succeeded,
    Failed,
    Missed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub vin: Vin,
    #[serde(with = "time::rfc3339")]
    pub slot: Timestamp,
    pub outcome: SlotOutcome,
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collector {
    registry: ProfileRegistry,
    policies: PolicySet,
    secrets: BTreeMap<BrandId, String>,
    consent_policy: ConsentPolicy,
    config: CollectorConfig,
    vault: TokenVault,
    mirrors: BTreeMap<Vin, QuotaLedger>,
    queues: BTreeMap<Vin, VecDeque<PendingRequest>>,
    deliveries: Vec<DeliveryRecord>,
    seen: BTreeSet<String>,
    journal: Vec<RawDelivery>,
    quarantine: Vec<NotificationEvent>,
    slots: Vec<SlotRecord>,
    #[serde(with = "time::rfc3339::option")]
    last_tick: Option<Timestamp>,
    metrics: Metrics,
}

/// Applies `f` to the VIN's consent and commits only if it changed.
fn update_consent<R>(
    statics: &mut dyn StaticStore,
    vin: &Vin,
    f: impl FnOnce(&mut ConsentRecord) -> R,
) -> Result<Option<R>, StorageError> {
    let Some(before) = statics.records().consent(vin).cloned() else {
        return Ok(None);
    };
    let mut after = before.clone();
    let r = f(&mut after);
    if after != before {
        statics.commit(&mut |set| set.put_consent(after.clone()))?;
    }
    Ok(Some(r))
}

impl Collector {
    pub fn new(registry: ProfileRegistry, policies: PolicySet, consent_policy: ConsentPolicy, config: CollectorConfig) -> Self {
        Self {
            registry,
            policies,
            secrets: BTreeMap::new(),
            consent_policy,
            config,
            vault: TokenVault::default(),
            mirrors: BTreeMap::new(),
            queues: BTreeMap::new(),
            deliveries: Vec::new(),
            seen: BTreeSet::new(),
            journal: Vec::new(),
            quarantine: Vec::new(),
            slots: Vec::new(),
            last_tick: None,
            metrics: Metrics::default(),
        }
    }

    /// Shared webhook secrets per brand; brands left out use the derived default.
    pub fn with_secrets(mut self, secrets: &BTreeMap<String, String>) -> Result<Self, IngestError> {
        for (brand, secret) in secrets {
            let id = self.registry.resolve(brand).map_err(|_| IngestError::UnknownBrand(brand.clone()))?.clone();
            self.secrets.insert(id, secret.clone());
        }
        Ok(self)
    }

    pub fn secret_for(&self, brand: &BrandId) -> String {
        self.secrets.get(brand).cloned().unwrap_or_else(|| derived_webhook_secret(brand))
    }

    pub fn registry(&self) -> &ProfileRegistry {
        &self.registry
    }

    pub fn policies(&self) -> &PolicySet {
        &self.policies
    }

    pub fn consent_policy(&self) -> &ConsentPolicy {
        &self.consent_policy
    }

    pub fn config(&self) -> &CollectorConfig {
        &self.config
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn deliveries(&self) -> &[DeliveryRecord] {
        &self.deliveries
    }

    pub fn journal(&self) -> &[RawDelivery] {
        &self.journal
    }

    pub fn quarantine(&self) -> &[NotificationEvent] {
        &self.quarantine
    }

    pub fn slots(&self) -> &[SlotRecord] {
        &self.slots
    }

    pub fn vault(&self) -> &TokenVault {
        &self.vault
    }

    pub fn pending(&self, vin: &Vin) -> usize {
        self.queues.get(vin).map_or(0, VecDeque::len)
    }

    pub fn pending_total(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    /// Earliest instant a queued request may run.
    pub fn next_due(&self) -> Option<Timestamp> {
        self.queues.values().filter_map(|q| q.front()).map(|r| r.not_before).min()
    }

    pub fn last_tick(&self) -> Option<Timestamp> {
        self.last_tick
    }

    fn record(&mut self, delivery_id: String, event: Option<&NotificationEvent>, now: Timestamp, d: Disposition) -> DeliveryRecord {
        let rec = DeliveryRecord {
            delivery_id,
            vin: event.map(|e| e.vin.clone()),
            kind: event.map(|e| e.kind),
            received_at: time::to_millis(now),
            disposition: d,
        };
        self.deliveries.push(rec.clone());
        rec
    }

    /// Notification flow entry point: verify, deduplicate, persist, route.
    pub fn receive_webhook(
        &mut self,
        statics: &mut dyn StaticStore,
        series: &mut dyn SeriesStore,
        brand: &str,
        headers: &WebhookHeaders,
        body: &[u8],
        now: Timestamp,
    ) -> Result<DeliveryRecord, IngestError> {
        let brand_id = self.registry.resolve(brand).map_err(|_| IngestError::UnknownBrand(brand.to_string()))?.clone();
        let delivery_id = headers.delivery_id.clone().ok_or(IngestError::MissingHeader(DELIVERY_ID_HEADER))?;
        let signature = headers.signature.clone().ok_or(IngestError::MissingHeader(SIGNATURE_HEADER))?;
        self.journal.push(RawDelivery {
            brand: brand.to_string(),
            headers: headers.clone(),
            body: String::from_utf8_lossy(body).into_owned(),
            received_at: time::to_millis(now),
        });
        self.metrics.webhooks_received += 1;
        let parsed: Option<NotificationEvent> = serde_json::from_slice(body).ok();
        if !signing::verify_webhook_signature(self.secret_for(&brand_id).as_bytes(), body, &signature) {
            self.metrics.webhooks_rejected += 1;
            tracing::warn!(%brand_id, %delivery_id, "webhook rejected: bad signature");
            return Ok(self.record(delivery_id, parsed.as_ref(), now, Disposition::RejectedBadSignature));
        }
        let event = parsed.ok_or_else(|| IngestError::Malformed("body is not a notification event".into()))?;
        if event.delivery_id != delivery_id {
            return Err(IngestError::Malformed("delivery id header does not match the payload".into()));
        }
        if self.seen.contains(&delivery_id) {
            self.metrics.webhooks_duplicate += 1;
            return Ok(self.record(delivery_id, Some(&event), now, Disposition::IgnoredDuplicate));
        }
        let disposition = self.route_event(statics, series, &brand_id, &event, now)?;
        self.seen.insert(delivery_id.clone());
        Ok(self.record(delivery_id, Some(&event), now, disposition))
    }

    fn route_event(
        &mut self,
        statics: &mut dyn StaticStore,
        series: &mut dyn SeriesStore,
        brand: &BrandId,
        event: &NotificationEvent,
        now: Timestamp,
    ) -> Result<Disposition, IngestError> {
        let known = statics.records().vehicle(&event.vin).is_some_and(|v| &v.brand == brand);
        if !known {
            self.metrics.webhooks_quarantined += 1;
            self.quarantine.push(event.clone());
            return Ok(Disposition::Quarantined);
        }
        if event.kind == NotificationKind::RevokeOfConsent {
            if series.append_event(event)? {
                self.metrics.events_stored += 1;
            }
            self.revoke(statics, &event.vin, RevocationSource::OemNotification, now)?;
            return Ok(Disposition::Stored);
        }
        if !self.permits(statics.records(), &event.vin, now) {
            self.metrics.webhooks_skipped += 1;
            return Ok(Disposition::SkippedNoConsent);
        }
        // Location changes only trigger requests; they are never stored as events.
        let stored = event.kind != NotificationKind::LocationChange;
        if stored && series.append_event(event)? {
            self.metrics.events_stored += 1;
        }
        let kinds = self.policies.get(brand).and_then(|p| p.kinds_for(event.kind)).cloned();
        match kinds {
            Some(kinds) => {
                self.enqueue(
                    &event.vin,
                    kinds,
                    RequestTrigger::Notification { delivery_id: event.delivery_id.clone() },
                    now,
                );
                Ok(Disposition::TriggeredRequest)
            }
            None if stored => Ok(Disposition::Stored),
            None => Ok(Disposition::SkippedNoConsent),
        }
    }

    /// Re-feeds a delivery journal; returns the new records.
    pub fn replay(
        &mut self,
        statics: &mut dyn StaticStore,
        series: &mut dyn SeriesStore,
        journal: &[RawDelivery],
    ) -> Result<Vec<DeliveryRecord>, IngestError> {
        journal
            .iter()
            .map(|raw| self.receive_webhook(statics, series, &raw.brand, &raw.headers, raw.body.as_bytes(), raw.received_at))
            .collect()
    }

    fn permits(&self, records: &StaticRecordSet, vin: &Vin, now: Timestamp) -> bool {
        records.consent(vin).is_some_and(|c| c.permits_collection(&self.consent_policy, now))
    }

    /// Revokes locally: consent moves to `Revoked`, credentials and queued work are dropped.
    pub fn revoke(
        &mut self,
        statics: &mut dyn StaticStore,
        vin: &Vin,
        source: RevocationSource,
        now: Timestamp,
    ) -> Result<bool, StorageError> {
        let revoked = update_consent(statics, vin, |r| r.revoke(source, now).is_ok())?.unwrap_or(false);
        if revoked {
            self.metrics.consents_revoked += 1;
            self.forget(vin);
        }
        Ok(revoked)
    }

    /// Drops credentials, the quota mirror stays (it tracks upstream state).
    pub fn forget(&mut self, vin: &Vin) {
        self.vault.remove(vin);
        self.queues.remove(vin);
    }

    /// Exchanges an authorization code and stores the grant.
    pub fn redeem_code(
        &mut self,
        upstream: &mut dyn Aggregator,
        vin: &Vin,
        code: &str,
        now: Timestamp,
    ) -> Result<CredentialPair, OAuthError> {
        let grant = upstream.token_exchange(&GrantRequest::AuthorizationCode { code: code.to_string() }, now)?;
        Ok(self.vault.store(vin, &grant, now))
    }

    pub fn enqueue(&mut self, vin: &Vin, kinds: BTreeSet<DataPointKind>, trigger: RequestTrigger, now: Timestamp) {
        let now = time::to_millis(now);
        self.metrics.requests_enqueued += 1;
        self.queues.entry(vin.clone()).or_default().push_back(PendingRequest {
            vin: vin.clone(),
            kinds,
            trigger,
            enqueued_at: now,
            not_before: now,
            attempts: 0,
        });
    }

    /// Request flow: consent gate, local quota mirror, token refresh, one upstream call.
    pub fn execute_request(
        &mut self,
        statics: &dyn StaticStore,
        series: &mut dyn SeriesStore,
        upstream: &mut dyn Aggregator,
        vin: &Vin,
        kinds: &BTreeSet<DataPointKind>,
        now: Timestamp,
    ) -> Result<Vec<TelemetrySample>, RequestError> {
        let now = time::to_millis(now);
        let records = statics.records();
        let vehicle = records.vehicle(vin).ok_or_else(|| RequestError::UnknownVehicle(vin.clone()))?;
        if !self.permits(records, vin, now) {
            self.metrics.requests_skipped_consent += 1;
            return Err(RequestError::ConsentInactive(vin.clone()));
        }
        let profile = self.registry.get(&vehicle.brand).ok_or_else(|| RequestError::UnknownVehicle(vin.clone()))?;
        let margin = Duration::milliseconds(self.config.quota_margin_ms);
        let (quota, tz) = (profile.request_quota, vehicle.tz);
        let mirror = self.mirrors.entry(vin.clone()).or_insert_with(|| QuotaLedger::new(quota, tz).with_margin(margin));
        if !mirror.available(now) {
            self.metrics.quota_deferred += 1;
            return Err(RequestError::QuotaDeferred { until: mirror.next_available(now) });
        }
        if self.vault.get(vin).is_none() {
            return Err(RequestError::NoCredentials(vin.clone()));
        }
        if self.vault.is_expired(vin, now) {
            let refresh_token = self.vault.get(vin).expect("checked above").refresh_token.clone();
            self.metrics.token_refreshes += 1;
            let grant = upstream
                .token_exchange(&GrantRequest::RefreshToken { refresh_token }, now)
                .map_err(RequestError::Token)?;
            self.vault.store(vin, &grant, now);
        }
        let token = self.vault.get(vin).expect("checked above").access_token.clone();
        let mirror = self.mirrors.get_mut(vin).expect("inserted above");
        mirror.try_acquire(now);
        self.metrics.upstream_calls += 1;
        match upstream.fetch_data(vin, kinds, &token, now) {
            Ok(samples) => {
                let report = series.append_samples(&samples).map_err(|e| RequestError::Storage(e.to_string()))?;
                self.metrics.requests_executed += 1;
                self.metrics.samples_stored += report.written as u64;
                self.metrics.samples_rejected += report.rejected.len() as u64;
                Ok(samples)
            }
            Err(e) => {
                self.metrics.upstream_errors += 1;
                match e {
                    crate::simulator::ApiError::QuotaExceeded { .. } => self.metrics.upstream_quota_exceeded += 1,
                    // Rejected before being charged upstream.
                    crate::simulator::ApiError::Unavailable
                    | crate::simulator::ApiError::Unauthorized
                    | crate::simulator::ApiError::UnsupportedKind { .. }
                    | crate::simulator::ApiError::UnknownVehicle => {
                        mirror.refund(now);
                    }
                }
                Err(RequestError::Upstream(e))
            }
        }
    }

    fn finish_slot(&mut self, req: &PendingRequest, outcome: SlotOutcome, now: Timestamp) {
        if let RequestTrigger::Poll { slot } = req.trigger {
            match outcome {
                SlotOutcome::Succeeded => self.metrics.slots_succeeded += 1,
                SlotOutcome::Failed => self.metrics.slots_failed += 1,
                _ => {}
            }
            self.slots.push(SlotRecord { vin: req.vin.clone(), slot, outcome, at: time::to_millis(now) });
        }
    }

    /// Runs due queued requests, one VIN queue at a time in FIFO order.
    /// Returns the number of successful upstream calls.
    pub fn process_queue(
        &mut self,
        statics: &dyn StaticStore,
        series: &mut dyn SeriesStore,
        upstream: &mut dyn Aggregator,
        now: Timestamp,
    ) -> usize {
        let mut executed = 0;
        let vins: Vec<Vin> = self.queues.keys().cloned().collect();
        for vin in vins {
            loop {
                let Some(req) = self.queues.get(&vin).and_then(|q| q.front()).cloned() else { break };
                if req.not_before > now {
                    break;
                }
                let result = self.execute_request(statics, series, upstream, &vin, &req.kinds, now);
                let queue = self.queues.get_mut(&vin).expect("front exists");
                match result {
                    Ok(_) => {
                        queue.pop_front();
                        executed += 1;
                        self.finish_slot(&req, SlotOutcome::Succeeded, now);
                    }
                    Err(RequestError::QuotaDeferred { until }) => {
                        if matches!(req.trigger, RequestTrigger::Poll { .. }) {
                            // A late odometer read would mislabel the slot.
                            queue.pop_front();
                            self.metrics.requests_failed += 1;
                            self.finish_slot(&req, SlotOutcome::Failed, now);
                            continue;
                        }
                        queue.front_mut().expect("front exists").not_before = until;
                        break;
                    }
                    Err(e) if e.is_transient() && req.attempts < self.config.max_upstream_retries => {
                        let front = queue.front_mut().expect("front exists");
                        front.attempts += 1;
                        let factor = 1i64 << (front.attempts - 1).min(20);
                        front.not_before = now + Duration::seconds(self.config.upstream_backoff_secs * factor);
                        break;
                    }
                    Err(RequestError::ConsentInactive(_)) => {
                        queue.pop_front();
                        self.finish_slot(&req, SlotOutcome::Skipped, now);
                    }
                    Err(e) => {
                        queue.pop_front();
                        self.metrics.requests_failed += 1;
                        tracing::debug!(%vin, error = %e, "request dropped");
                        self.finish_slot(&req, SlotOutcome::Failed, now);
                    }
                }
            }
        }
        self.queues.retain(|_, q| !q.is_empty());
        executed
    }

    /// Scheduler tick: expires overdue complex-flow consents and enqueues
    /// odometer polls whose slot passed since the previous tick.
    pub fn tick(&mut self, statics: &mut dyn StaticStore, now: Timestamp) -> Result<(), StorageError> {
        let now = time::to_millis(now);
        let tick = Duration::seconds(self.config.tick_secs);
        let prev = self.last_tick.unwrap_or(now - tick);
        self.last_tick = Some(now);

        let complex: Vec<Vin> = statics
            .records()
            .consents()
            .filter(|c| c.variant == ConsentVariant::StellantisComplex)
            .map(|c| c.vin.clone())
            .collect();
        let policy = self.consent_policy;
        for vin in complex {
            if update_consent(statics, &vin, |r| r.sweep_expiry(&policy, now))? == Some(true) {
                self.metrics.consents_expired += 1;
                self.queues.remove(&vin);
            }
        }

        let mut due: Vec<(Vin, BTreeSet<DataPointKind>, Timestamp, bool)> = Vec::new();
        for v in statics.records().vehicles() {
            let Some(p) = self.policies.get(&v.brand).filter(|p| p.mode == CollectionMode::ScheduledPolls) else {
                continue;
            };
            if !self.permits(statics.records(), &v.vin, now) {
                continue;
            }
            for slot in slots_between(v.tz, &p.poll_times, prev, now) {
                due.push((v.vin.clone(), p.poll_kinds.clone(), slot, slot_is_missed(slot, now, tick)));
            }
        }
        for (vin, kinds, slot, missed) in due {
            if missed {
                self.metrics.slots_missed += 1;
                tracing::info!(%vin, slot = %time::format_rfc3339(&slot), "poll slot missed");
                self.slots.push(SlotRecord { vin, slot, outcome: SlotOutcome::Missed, at: now });
            } else {
                self.metrics.slots_fired += 1;
                self.enqueue(&vin, kinds, RequestTrigger::Poll { slot }, now);
            }
        }
        Ok(())
    }
}

/// Request-sourced samples stored while the VIN's consent was not active.
pub fn consent_gate_violations(records: &StaticRecordSet, series: &dyn SeriesStore) -> Vec<TelemetrySample> {
    let mut out = Vec::new();
    for vin in series.index().vins() {
        let consent = records.consent(&vin);
        for kind in DataPointKind::ALL {
            for s in series.query_series(&vin, *kind, TimeRange::all(), None) {
                if s.source == SampleSource::Request && !consent.is_some_and(|c| c.was_active_at(s.observed_at)) {
                    out.push(s);
                }
            }
        }
    }
    out
}
