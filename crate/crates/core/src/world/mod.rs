//! The desk-scale deployment: platform services (eligibility, consent,
//! collection, storage, analytics) wired to the simulated aggregator and
//! driven by one simulated clock.
//!
//! [`World::advance_to`] is a discrete-event loop. It jumps between
//! scheduler ticks, simulator emissions, webhook retries and queued
//! requests, so months of simulated collection run in seconds.

pub mod persist;
mod sink;

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    self, AnalyticsConfig, AnalyticsError, RiskFeatureVector, SpeedLimitMap, TheftReport, TripSummary, VinReport,
};
use crate::consent::{
    self, ConsentError, ConsentPolicy, ConsentRecord, ConsentState, EmailPurpose, LinkSigner, MailTransport,
    OutboundEmail, RevocationSource,
};
use crate::domain::{
    BrandId, ConsentVariant, DataPointKind, PrivacyMechanism, ProfileRegistry, TelemetrySample, Vehicle, Vin,
};
use crate::eligibility::{
    EligibilityError, EligibilityOutcome, EligibilityService, FleetFixture, ReviewDelay, RuleSet, VinCheckMethod,
};
use crate::ingestion::{
    CollectionPolicy, Collector, CollectorConfig, DeliveryRecord, IngestError, PolicySet, RequestError, RequestTrigger,
    TokenVault, WebhookHeaders,
};
use crate::simulator::{presets, OAuthError, OutageWindow, SimulationConfig, Simulator, SimulatorError};
use crate::storage::{MemorySeriesStore, MemoryStaticStore, SeriesStore, StaticStore, StorageError, TimeRange};
use crate::time::{self, SimClock, Timestamp};

use sink::PlatformSink;

pub const DEFAULT_LINK_SECRET: &str = "consent-link-secret";

fn default_link_secret() -> String {
    DEFAULT_LINK_SECRET.to_string()
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Consent(#[from] ConsentError),
    #[error(transparent)]
    Eligibility(#[from] EligibilityError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error("token exchange: {0}")]
    OAuth(#[from] OAuthError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Request(#[from] RequestError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("vehicle {0} is not enrolled")]
    UnknownVehicle(Vin),
    #[error("no consent for {0}")]
    NoConsent(Vin),
    #[error("cannot move the clock back to {0}")]
    ClockBackwards(Timestamp),
    #[error("config: {0}")]
    Config(String),
}

/// Everything needed to build a [`World`]; also the `--config` file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub collector: CollectorConfig,
    #[serde(default)]
    pub consent: ConsentPolicy,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
    #[serde(default)]
    pub policies: Vec<CollectionPolicy>,
    #[serde(default = "default_link_secret")]
    pub link_secret: String,
    #[serde(default)]
    pub review_delay: ReviewDelay,
    /// VIN-check method per brand; unlisted brands use the automatic API.
    #[serde(default)]
    pub vin_check_methods: BTreeMap<BrandId, VinCheckMethod>,
    /// Windows in which the platform itself is down.
    #[serde(default)]
    pub platform_downtime: Vec<OutageWindow>,
}

impl WorldConfig {
    pub fn new(simulation: SimulationConfig) -> Self {
        Self {
            simulation,
            collector: CollectorConfig::default(),
            consent: ConsentPolicy::default(),
            analytics: AnalyticsConfig::default(),
            policies: Vec::new(),
            link_secret: default_link_secret(),
            review_delay: ReviewDelay::default(),
            vin_check_methods: BTreeMap::new(),
            platform_downtime: Vec::new(),
        }
    }

    /// Simulation of the named presets.
    pub fn from_presets(seed: u64, epoch: Timestamp, names: &[&str]) -> Result<Self, WorldError> {
        let vehicles = names
            .iter()
            .map(|n| presets::preset(n, epoch).map(|p| p.sim).ok_or_else(|| WorldError::Config(format!("unknown preset {n:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(SimulationConfig::new(seed, epoch, vehicles)))
    }
}

/// Serializable state of a [`World`] apart from its stores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldState {
    pub config: WorldConfig,
    pub clock: SimClock,
    #[serde(with = "time::rfc3339")]
    pub next_tick: Timestamp,
    pub sim: Simulator,
    pub collector: Collector,
    pub mailer: MailTransport,
}

/// One consent step driven by the driver or the OEM portal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum ConsentStep {
    AcceptLink { token: String },
    OemConfirm { approved: bool },
    VerifyIdentity { passed: bool },
    PrivacySettings { mechanism: PrivacyMechanism },
    TransmissionTest,
    CompleteBackground,
    ReportOdometer { km: f64 },
}

pub struct World {
    config: WorldConfig,
    clock: SimClock,
    next_tick: Timestamp,
    sim: Simulator,
    collector: Collector,
    mailer: MailTransport,
    statics: Box<dyn StaticStore>,
    series: Box<dyn SeriesStore>,
    registry: ProfileRegistry,
    eligibility: EligibilityService,
    signer: LinkSigner,
    map: Option<SpeedLimitMap<f64>>,
}

impl World {
    pub fn new(
        config: WorldConfig,
        registry: ProfileRegistry,
        statics: Box<dyn StaticStore>,
        series: Box<dyn SeriesStore>,
    ) -> Result<Self, WorldError> {
        let sim = Simulator::new(config.simulation.clone(), registry.clone())?;
        let policies = PolicySet::with_overrides(config.policies.clone(), &registry)?;
        let collector = Collector::new(registry.clone(), policies, config.consent, config.collector)
            .with_secrets(&config.simulation.webhook_secrets)?;
        let epoch = time::to_millis(config.simulation.epoch);
        let state = WorldState {
            config,
            clock: SimClock::starting_at(epoch),
            next_tick: epoch,
            sim,
            collector,
            mailer: MailTransport::default(),
        };
        Ok(Self::resume(state, registry, statics, series))
    }

    /// In-memory world over the named presets.
    pub fn in_memory(seed: u64, epoch: Timestamp, preset_names: &[&str]) -> Result<Self, WorldError> {
        Self::in_memory_with(WorldConfig::from_presets(seed, epoch, preset_names)?)
    }

    pub fn in_memory_with(config: WorldConfig) -> Result<Self, WorldError> {
        Self::new(config, ProfileRegistry::builtin(), Box::new(MemoryStaticStore::new()), Box::new(MemorySeriesStore::new()))
    }

    pub fn resume(
        state: WorldState,
        registry: ProfileRegistry,
        statics: Box<dyn StaticStore>,
        series: Box<dyn SeriesStore>,
    ) -> Self {
        let eligibility = EligibilityService::new(RuleSet::builtin(), state.config.review_delay);
        let signer = LinkSigner::new(state.config.link_secret.as_bytes().to_vec())
            .with_validity(Duration::hours(state.config.consent.link_validity_hours));
        Self {
            clock: state.clock,
            next_tick: state.next_tick,
            sim: state.sim,
            collector: state.collector,
            mailer: state.mailer,
            statics,
            series,
            registry,
            eligibility,
            signer,
            map: None,
            config: state.config,
        }
    }

    pub fn snapshot(&self) -> WorldState {
        WorldState {
            config: self.config.clone(),
            clock: self.clock,
            next_tick: self.next_tick,
            sim: self.sim.clone(),
            collector: self.collector.clone(),
            mailer: self.mailer.clone(),
        }
    }

    pub fn set_mail_transport(&mut self, transport: MailTransport) {
        self.mailer = transport;
    }

    pub fn set_speed_limit_map(&mut self, map: Option<SpeedLimitMap<f64>>) {
        self.map = map;
    }

    pub fn speed_limit_map(&self) -> Option<&SpeedLimitMap<f64>> {
        self.map.as_ref()
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn registry(&self) -> &ProfileRegistry {
        &self.registry
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn sim(&self) -> &Simulator {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut Simulator {
        &mut self.sim
    }

    pub fn collector(&self) -> &Collector {
        &self.collector
    }

    pub fn statics(&self) -> &dyn StaticStore {
        self.statics.as_ref()
    }

    pub fn series(&self) -> &dyn SeriesStore {
        self.series.as_ref()
    }

    pub fn series_mut(&mut self) -> &mut dyn SeriesStore {
        self.series.as_mut()
    }

    pub fn mailer(&self) -> &MailTransport {
        &self.mailer
    }

    pub fn is_down(&self, t: Timestamp) -> bool {
        self.config.platform_downtime.iter().any(|w| w.contains(t))
    }

    fn downtime_end(&self, t: Timestamp) -> Option<Timestamp> {
        self.config.platform_downtime.iter().filter(|w| w.contains(t)).map(|w| w.to).max()
    }

    // ---- simulated time -------------------------------------------------

    pub fn advance(&mut self, by: Duration) -> Result<(), WorldError> {
        let target = self.now() + by;
        self.advance_to(target)
    }

    /// Runs every simulated activity up to and including `target`.
    pub fn advance_to(&mut self, target: Timestamp) -> Result<(), WorldError> {
        let target = time::to_millis(target);
        if target < self.now() {
            return Err(WorldError::ClockBackwards(target));
        }
        loop {
            let now = self.now();
            let mut next = self.next_tick;
            if let Some(t) = self.sim.next_activity(now, target) {
                next = next.min(t);
            }
            if let Some(due) = self.collector.next_due() {
                let due = due.max(now);
                let due = self.downtime_end(due).unwrap_or(due);
                next = next.min(due.max(now));
            }
            if next > target {
                self.clock.set(target);
                return Ok(());
            }
            self.clock.set(next);
            self.step(next)?;
            if self.now() == now && next == now && self.step_is_idle(now) {
                // Nothing moved at this instant; leave it.
                self.clock.set((now + Duration::milliseconds(1)).min(target));
            }
        }
    }

    fn step_is_idle(&mut self, now: Timestamp) -> bool {
        self.next_tick > now
            && self.collector.next_due().is_none_or(|d| d > now || self.is_down(now))
            && self.sim.dispatcher().next_due().is_none_or(|d| d > now)
    }

    fn step(&mut self, now: Timestamp) -> Result<(), WorldError> {
        self.sim.emit_notifications(now);
        let up = !self.is_down(now);
        {
            let mut sink = PlatformSink {
                collector: &mut self.collector,
                statics: self.statics.as_mut(),
                series: self.series.as_mut(),
                up,
            };
            self.sim.pump_webhooks(now, &mut sink);
        }
        if up {
            if now >= self.next_tick {
                self.collector.tick(self.statics.as_mut(), now)?;
                self.resolve_reviews(now)?;
            }
            self.collector.process_queue(self.statics.as_ref(), self.series.as_mut(), &mut self.sim, now);
        }
        let tick = Duration::seconds(self.config.collector.tick_secs.max(1));
        while self.next_tick <= now {
            self.next_tick += tick;
        }
        Ok(())
    }

    fn resolve_reviews(&mut self, now: Timestamp) -> Result<(), WorldError> {
        let due: Vec<EligibilityOutcome> = self
            .statics
            .records()
            .outcomes()
            .filter_map(|o| self.eligibility.resolve_pending(o, &self.sim, now))
            .collect();
        for o in due {
            self.statics.commit(&mut |set| set.put_outcome(o.clone()))?;
        }
        Ok(())
    }

    // ---- enrolment and eligibility --------------------------------------

    /// Registers a vehicle in the static store.
    pub fn enroll(&mut self, vehicle: Vehicle) -> Result<(), WorldError> {
        let registry = self.registry.clone();
        let mut vehicle = vehicle;
        vehicle.brand = registry.resolve(vehicle.brand.as_str()).map_err(|e| WorldError::Config(e.to_string()))?.clone();
        self.statics.commit(&mut |set| set.put_vehicle(vehicle.clone(), &registry))?;
        Ok(())
    }

    /// Enrols a preset vehicle with the time zone of its simulator config.
    pub fn enroll_preset(&mut self, name: &str) -> Result<Vin, WorldError> {
        let p = presets::preset(name, self.config.simulation.epoch)
            .ok_or_else(|| WorldError::Config(format!("unknown preset {name:?}")))?;
        let mut v = p.vehicle;
        v.tz = p.sim.tz;
        let vin = v.vin.clone();
        self.enroll(v)?;
        Ok(vin)
    }

    /// Enrols a simulated vehicle: bundled fleet data when the VIN is
    /// known there, otherwise a record built from the simulator config.
    pub fn enroll_simulated(&mut self, vin: &Vin) -> Result<(), WorldError> {
        let sim = self
            .config
            .simulation
            .vehicles
            .iter()
            .find(|v| &v.vin == vin)
            .cloned()
            .ok_or_else(|| WorldError::UnknownVehicle(vin.clone()))?;
        let mut vehicle = FleetFixture::fleet19().vehicles.into_iter().find(|v| &v.vin == vin).unwrap_or_else(|| {
            Vehicle {
                vin: vin.clone(),
                brand: BrandId::new(&sim.profile),
                model: "unspecified".into(),
                production_year: chrono::Datelike::year(&self.config.simulation.epoch),
                purchase_country: "LU".into(),
                fidelity_program_member: false,
                tz: sim.tz,
            }
        });
        vehicle.tz = sim.tz;
        self.enroll(vehicle)
    }

    fn vehicle(&self, vin: &Vin) -> Result<Vehicle, WorldError> {
        self.statics.records().vehicle(vin).cloned().ok_or_else(|| WorldError::UnknownVehicle(vin.clone()))
    }

    /// Requirement check, then the VIN check against the simulated OEM.
    pub fn check_eligibility(&mut self, vin: &Vin) -> Result<EligibilityOutcome, WorldError> {
        let now = self.now();
        let vehicle = self.vehicle(vin)?;
        let mut outcome = self.eligibility.check_requirements(&vehicle, now)?;
        if outcome.requirement_ok {
            let method = self.config.vin_check_methods.get(&vehicle.brand).copied().unwrap_or(VinCheckMethod::AutomaticApi);
            outcome = self.eligibility.vin_check(Some(&outcome), vin, method, &self.sim, now)?;
        }
        self.statics.commit(&mut |set| set.put_outcome(outcome.clone()))?;
        Ok(outcome)
    }

    // ---- consent ---------------------------------------------------------

    fn send_mail(&mut self, vin: &Vin, to: &str, purpose: EmailPurpose, subject: &str, body: String) {
        let email = OutboundEmail {
            to: to.to_string(),
            vin: vin.clone(),
            purpose,
            subject: subject.to_string(),
            body,
            sent_at: self.now(),
        };
        self.mailer.send(email);
    }

    pub fn consent(&self, vin: &Vin) -> Option<&ConsentRecord> {
        self.statics.records().consent(vin)
    }

    fn put_consent(&mut self, rec: ConsentRecord) -> Result<(), WorldError> {
        self.statics.commit(&mut |set| set.put_consent(rec.clone()))?;
        Ok(())
    }

    pub fn initiate_consent(&mut self, vin: &Vin, driver_email: &str) -> Result<ConsentRecord, WorldError> {
        let now = self.now();
        let vehicle = self.vehicle(vin)?;
        let variant = self
            .registry
            .get(&vehicle.brand)
            .map(|p| p.consent_variant)
            .ok_or_else(|| WorldError::UnknownVehicle(vin.clone()))?;
        let records = self.statics.records();
        let rec = consent::initiate_consent(
            records.consent(vin),
            records.outcome(vin),
            vin,
            driver_email,
            variant,
            &self.signer,
            now,
        )?;
        self.put_consent(rec.clone())?;
        let token = rec.link.as_ref().map(|l| l.token.clone()).unwrap_or_default();
        self.send_mail(
            vin,
            driver_email,
            EmailPurpose::ConsentLink,
            "Share your vehicle data",
            format!("Open https://platform.invalid/consent/{vin}?token={token} to review and approve data sharing."),
        );
        Ok(rec)
    }

    fn require_consent(&self, vin: &Vin) -> Result<ConsentRecord, WorldError> {
        self.consent(vin).cloned().ok_or_else(|| WorldError::NoConsent(vin.clone()))
    }

    /// Highest odometer already stored for the VIN.
    fn odometer_floor(&self, vin: &Vin) -> Option<f64> {
        self.series
            .query_series(vin, DataPointKind::Odometer, TimeRange::all(), None)
            .iter()
            .filter_map(|s| s.value.as_km())
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    }

    pub fn consent_step(&mut self, vin: &Vin, step: ConsentStep) -> Result<ConsentRecord, WorldError> {
        let now = self.now();
        let policy = self.config.consent;
        let mut rec = self.require_consent(vin)?;
        match step {
            ConsentStep::AcceptLink { token } => rec.accept_link(&token, &self.signer, now)?,
            ConsentStep::OemConfirm { approved } => {
                // Dry run first so no credentials are issued for a step that would fail.
                rec.clone().confirm_on_oem_portal(approved, Some(TokenVault::refs(vin)), now)?;
                let creds = if approved {
                    let code = self.sim.approve_data_sharing(vin, now)?;
                    Some(self.collector.redeem_code(&mut self.sim, vin, &code, now)?)
                } else {
                    None
                };
                rec.confirm_on_oem_portal(approved, creds, now)?;
            }
            ConsentStep::VerifyIdentity { passed } => {
                if rec.verify_identity(passed, &policy, now)? {
                    let to = rec.driver_email.clone();
                    self.send_mail(
                        vin,
                        &to,
                        EmailPurpose::SupportEscalation,
                        "Identity verification needs help",
                        "Identity verification failed repeatedly; our support team will contact you.".into(),
                    );
                }
            }
            ConsentStep::PrivacySettings { mechanism } => {
                let installed = self.sim.privacy_mechanism(vin).ok_or_else(|| WorldError::UnknownVehicle(vin.clone()))?;
                rec.configure_privacy_settings(mechanism, installed, now)?;
            }
            ConsentStep::TransmissionTest => {
                if rec.state != ConsentState::TransmissionTest {
                    return Err(ConsentError::WrongState { op: "run_transmission_test", state: rec.state }.into());
                }
                let run = self.sim.run_transmission_test(vin, now, policy.transmission_test_secs)?;
                self.advance_to(run.finished_at)?;
                rec = self.require_consent(vin)?;
                let ok = run.succeeded;
                rec.run_transmission_test(run)?;
                if !ok {
                    let (to, advisory) = (rec.driver_email.clone(), rec.advisory.clone().unwrap_or_default());
                    self.send_mail(vin, &to, EmailPurpose::WorkshopAdvisory, "Transmission test failed", advisory);
                }
            }
            ConsentStep::CompleteBackground => {
                let since = rec.background_started_at.unwrap_or(now);
                let trips = self.sim.trips_between(vin, since, now)?.len();
                rec.complete_background_processing(trips, &policy, now)?;
                let to = rec.driver_email.clone();
                self.send_mail(
                    vin,
                    &to,
                    EmailPurpose::OdometerReportPrompt,
                    "Report your odometer",
                    "Please report your current odometer reading to activate data sharing.".into(),
                );
            }
            ConsentStep::ReportOdometer { km } => {
                let floor = self.odometer_floor(vin);
                let needs_credentials = rec.access_token.is_none() && rec.state != ConsentState::Active;
                let creds = if needs_credentials {
                    rec.clone().report_odometer(km, now, floor, Some(TokenVault::refs(vin)))?;
                    let code = self.sim.approve_data_sharing(vin, now)?;
                    Some(self.collector.redeem_code(&mut self.sim, vin, &code, now)?)
                } else {
                    None
                };
                rec.report_odometer(km, now, floor, creds)?;
            }
        }
        self.put_consent(rec.clone())?;
        Ok(rec)
    }

    /// Driver-portal revocation: local consent, credentials and the OEM grant all end.
    pub fn revoke(&mut self, vin: &Vin) -> Result<ConsentRecord, WorldError> {
        let now = self.now();
        let rec = self.require_consent(vin)?;
        if rec.state == ConsentState::Revoked {
            return Err(ConsentError::AlreadyRevoked.into());
        }
        if !self.collector.revoke(self.statics.as_mut(), vin, RevocationSource::DriverPortal, now)? {
            let mut rec = rec;
            rec.revoke(RevocationSource::DriverPortal, now)?;
        }
        self.sim.revoke_at_oem(vin, now)?;
        self.require_consent(vin)
    }

    /// Runs every step a cooperative driver takes until the consent is
    /// active: eligibility, link, OEM approval or the complex flow with its
    /// transmission test, background wait and first odometer report.
    pub fn activate(&mut self, vin: &Vin, driver_email: &str) -> Result<ConsentRecord, WorldError> {
        if self.statics.records().outcome(vin).is_none_or(|o| !o.is_eligible()) {
            let o = self.check_eligibility(vin)?;
            if let Some(due) = o.resolves_at {
                self.advance_to(due.max(self.now()))?;
                self.resolve_reviews(self.now())?;
            }
        }
        let rec = self.initiate_consent(vin, driver_email)?;
        let token = rec.link.map(|l| l.token).unwrap_or_default();
        let mut rec = self.consent_step(vin, ConsentStep::AcceptLink { token })?;
        if rec.variant == ConsentVariant::SimplePortal {
            return self.consent_step(vin, ConsentStep::OemConfirm { approved: true });
        }
        self.consent_step(vin, ConsentStep::VerifyIdentity { passed: true })?;
        let mechanism = self.sim.privacy_mechanism(vin).ok_or_else(|| WorldError::UnknownVehicle(vin.clone()))?;
        self.consent_step(vin, ConsentStep::PrivacySettings { mechanism })?;
        for _ in 0..10 {
            rec = self.consent_step(vin, ConsentStep::TransmissionTest)?;
            if rec.state == ConsentState::BackgroundProcessing {
                break;
            }
        }
        let min = Duration::days(self.config.consent.background_min_days);
        self.advance(min)?;
        for _ in 0..60 {
            match self.consent_step(vin, ConsentStep::CompleteBackground) {
                Ok(_) => break,
                Err(WorldError::Consent(ConsentError::CarNotDriven | ConsentError::BackgroundStillRunning(_))) => {
                    self.advance(Duration::days(1))?;
                }
                Err(e) => return Err(e),
            }
        }
        let km = self.odometer_now(vin)?;
        self.consent_step(vin, ConsentStep::ReportOdometer { km })
    }

    /// Odometer reading on the dashboard right now.
    pub fn odometer_now(&mut self, vin: &Vin) -> Result<f64, WorldError> {
        let now = self.now();
        let v = self.sim.vehicle_mut(vin).ok_or_else(|| WorldError::UnknownVehicle(vin.clone()))?;
        Ok(v.value(DataPointKind::Odometer, now).as_km().unwrap_or(0.0))
    }

    // ---- collection ------------------------------------------------------

    /// Webhook endpoint: verifies, deduplicates and routes one delivery,
    /// then runs any request it triggered.
    pub fn receive_webhook(&mut self, brand: &str, headers: &WebhookHeaders, body: &[u8]) -> Result<DeliveryRecord, WorldError> {
        let now = self.now();
        let rec = self.collector.receive_webhook(self.statics.as_mut(), self.series.as_mut(), brand, headers, body, now)?;
        self.collector.process_queue(self.statics.as_ref(), self.series.as_mut(), &mut self.sim, now);
        Ok(rec)
    }

    /// Feeds the whole delivery journal through the webhook path again.
    pub fn replay_journal(&mut self) -> Result<Vec<DeliveryRecord>, WorldError> {
        let journal = self.collector.journal().to_vec();
        Ok(self.collector.replay(self.statics.as_mut(), self.series.as_mut(), &journal)?)
    }

    /// Queues an operator request and runs the queue.
    pub fn request_now(&mut self, vin: &Vin, kinds: BTreeSet<DataPointKind>) -> Result<(), WorldError> {
        let now = self.now();
        self.collector.enqueue(vin, kinds, RequestTrigger::Manual, now);
        if !self.is_down(now) {
            self.collector.process_queue(self.statics.as_ref(), self.series.as_mut(), &mut self.sim, now);
        }
        Ok(())
    }

    /// Direct request, bypassing the queue.
    pub fn execute_request(&mut self, vin: &Vin, kinds: &BTreeSet<DataPointKind>) -> Result<Vec<TelemetrySample>, WorldError> {
        let now = self.now();
        Ok(self.collector.execute_request(self.statics.as_ref(), self.series.as_mut(), &mut self.sim, vin, kinds, now)?)
    }

    /// Data points stored for a VIN: distinct observations plus events.
    pub fn data_points(&self, vin: &Vin) -> usize {
        self.series.index().data_point_count(vin)
    }

    // ---- analytics -------------------------------------------------------

    pub fn trip_summaries(&self, vin: &Vin, range: TimeRange) -> Result<Vec<TripSummary>, WorldError> {
        Ok(analytics::trip_summaries(self.series.as_ref(), vin, range, &self.config.analytics, self.map.as_ref())?)
    }

    pub fn risk_features(&self, vin: &Vin, from: Timestamp, to: Timestamp) -> Result<RiskFeatureVector, WorldError> {
        Ok(analytics::build_risk_features(self.series.as_ref(), vin, from, to, &self.config.analytics, self.map.as_ref())?)
    }

    pub fn theft_report(&self, vin: &Vin) -> Result<TheftReport, WorldError> {
        Ok(analytics::theft_report(self.series.as_ref(), vin, &self.config.analytics)?)
    }

    /// Monthly data cost of the VIN's brand.
    pub fn data_cost(&self, vin: &Vin) -> Result<f64, WorldError> {
        let v = self.vehicle(vin)?;
        self.registry.get(&v.brand).map(|p| p.monthly_data_cost_eur).ok_or(WorldError::UnknownVehicle(vin.clone()))
    }

    pub fn vin_report(&self, vin: &Vin, from: Timestamp, to: Timestamp, premium: Option<f64>) -> Result<VinReport, WorldError> {
        let cost = match premium {
            Some(p) => Some(analytics::cost_viability(self.data_cost(vin)?, p, analytics::DEFAULT_VIABILITY_THRESHOLD)?),
            None => None,
        };
        Ok(analytics::vin_report(self.series.as_ref(), vin, from, to, &self.config.analytics, self.map.as_ref(), cost)?)
    }
}
