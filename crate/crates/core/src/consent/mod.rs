//! Per-OEM consent workflows gating all data collection.
//!
//! A [`ConsentRecord`] moves along the edges declared for its variant (see
//! [`declared_edges`]); every mutation goes through [`ConsentRecord::transition`],
//! which rejects undeclared edges and appends to the record's history. The
//! history is what the ingestion gate and the acceptance suite use to decide
//! whether a sample was collected inside an active consent interval.

mod link;
mod mailer;
mod state;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{is_plausible_email, ConsentVariant, PrivacyMechanism, Vin};
use crate::eligibility::EligibilityOutcome;
use crate::time::{self, Timestamp};

pub use link::{ConsentLink, LinkError, LinkSigner, LINK_VALIDITY_HOURS};
pub use mailer::{EmailPurpose, MailTransport, OutboundEmail};
pub use state::{declared_edges, is_declared_edge, states_of, ConsentState};

/// Opaque reference into the platform's credential vault.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CredentialRef(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialPair {
    pub access: CredentialRef,
    pub refresh: CredentialRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevocationSource {
    DriverPortal,
    OemNotification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsentPolicy {
    pub link_validity_hours: i64,
    pub identity_retry_limit: u32,
    /// Maximum age of the last odometer report for a complex-variant consent to stay active.
    pub odometer_report_days: i64,
    /// Minimum duration of the OEM background process.
    pub background_min_days: i64,
    pub transmission_test_secs: i64,
}

impl Default for ConsentPolicy {
    fn default() -> Self {
        Self {
            link_validity_hours: LINK_VALIDITY_HOURS,
            identity_retry_limit: 3,
            odometer_report_days: 90,
            background_min_days: 3,
            transmission_test_secs: 360,
        }
    }
}

impl ConsentPolicy {
    pub fn report_validity(&self) -> Duration {
        Duration::days(self.odometer_report_days)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: ConsentState,
    pub to: ConsentState,
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionTestRun {
    #[serde(with = "time::rfc3339")]
    pub started_at: Timestamp,
    #[serde(with = "time::rfc3339")]
    pub finished_at: Timestamp,
    pub succeeded: bool,
}

impl TransmissionTestRun {
    pub fn elapsed(&self) -> Duration {
        self.finished_at - self.started_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revocation {
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
    pub source: RevocationSource,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsentError {
    #[error("vehicle {0} has not passed the VIN check")]
    NotEligible(Vin),
    #[error("vehicle {0} already has a consent in progress or active")]
    ConsentAlreadyActive(Vin),
    #[error("no consent for {0}")]
    UnknownConsent(Vin),
    #[error("{op} is not allowed in state {state}")]
    WrongState { op: &'static str, state: ConsentState },
    #[error("{op} does not apply to the {variant:?} flow")]
    WrongVariant { op: &'static str, variant: ConsentVariant },
    #[error("vehicle uses {installed:?}, driver configured {chosen:?}")]
    MechanismMismatch { installed: PrivacyMechanism, chosen: PrivacyMechanism },
    #[error("no trip driven since the transmission test")]
    CarNotDriven,
    #[error("OEM background processing runs until {0}")]
    BackgroundStillRunning(Timestamp),
    #[error("odometer {km} km is below the last known {floor_km} km")]
    OdometerRegression { km: f64, floor_km: f64 },
    #[error("odometer reading must be a finite non-negative number")]
    InvalidOdometer,
    #[error("consent already revoked")]
    AlreadyRevoked,
    #[error("approval requires OAuth credentials")]
    MissingCredentials,
    #[error("invalid email address {0:?}")]
    InvalidEmail(String),
    #[error("consent link rejected: {0:?}")]
    InvalidLink(LinkError),
    #[error("consent link already used")]
    LinkAlreadyUsed,
    #[error("undeclared transition {from} -> {to}")]
    UndeclaredTransition { from: ConsentState, to: ConsentState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub vin: Vin,
    pub driver_email: String,
    pub state: ConsentState,
    pub variant: ConsentVariant,
    #[serde(with = "time::rfc3339::option")]
    pub granted_at: Option<Timestamp>,
    pub access_token: Option<CredentialRef>,
    pub refresh_token: Option<CredentialRef>,
    #[serde(with = "time::rfc3339::option")]
    pub last_odometer_report_at: Option<Timestamp>,
    pub last_reported_odometer_km: Option<f64>,
    pub identity_failures: u32,
    pub support_flag: bool,
    pub privacy_mechanism: Option<PrivacyMechanism>,
    pub transmission_test: Option<TransmissionTestRun>,
    #[serde(with = "time::rfc3339::option")]
    pub background_started_at: Option<Timestamp>,
    pub advisory: Option<String>,
    pub revocation: Option<Revocation>,
    pub link: Option<ConsentLink>,
    pub link_used: bool,
    /// Enrolment count for the VIN; feeds the link nonce.
    pub enrolment: u32,
    pub history: Vec<Transition>,
}

/// Starts an enrolment: `Initiated -> EmailSent` with a fresh signed link.
///
/// A revoked or absent prior record may be replaced; anything else is an
/// enrolment already in progress or active.
pub fn initiate_consent(
    prior: Option<&ConsentRecord>,
    eligibility: Option<&EligibilityOutcome>,
    vin: &Vin,
    driver_email: &str,
    variant: ConsentVariant,
    signer: &LinkSigner,
    now: Timestamp,
) -> Result<ConsentRecord, ConsentError> {
    if !is_plausible_email(driver_email) {
        return Err(ConsentError::InvalidEmail(driver_email.to_string()));
    }
    if !eligibility.is_some_and(|o| &o.vin == vin && o.is_eligible()) {
        return Err(ConsentError::NotEligible(vin.clone()));
    }
    if prior.is_some_and(|p| p.state != ConsentState::Revoked) {
        return Err(ConsentError::ConsentAlreadyActive(vin.clone()));
    }
    let now = time::to_millis(now);
    let enrolment = prior.map(|p| p.enrolment + 1).unwrap_or(1);
    let mut rec = ConsentRecord {
        vin: vin.clone(),
        driver_email: driver_email.trim().to_string(),
        state: ConsentState::Initiated,
        variant,
        granted_at: None,
        access_token: None,
        refresh_token: None,
        last_odometer_report_at: None,
        last_reported_odometer_km: None,
        identity_failures: 0,
        support_flag: false,
        privacy_mechanism: None,
        transmission_test: None,
        background_started_at: None,
        advisory: None,
        revocation: None,
        link: None,
        link_used: false,
        enrolment,
        // Earlier enrolments stay in the history so past active intervals remain auditable.
        history: prior.map(|p| p.history.clone()).unwrap_or_default(),
    };
    rec.link = Some(signer.issue(vin, driver_email, enrolment, now));
    rec.transition(ConsentState::EmailSent, now)?;
    Ok(rec)
}

impl ConsentRecord {
    /// Moves along a declared edge and records it.
    pub fn transition(&mut self, to: ConsentState, at: Timestamp) -> Result<(), ConsentError> {
        if !is_declared_edge(self.variant, self.state, to) {
            return Err(ConsentError::UndeclaredTransition { from: self.state, to });
        }
        self.history.push(Transition { from: self.state, to, at: time::to_millis(at) });
        self.state = to;
        Ok(())
    }

    fn expect_state(&self, op: &'static str, allowed: &[ConsentState]) -> Result<(), ConsentError> {
        if allowed.contains(&self.state) {
            Ok(())
        } else {
            Err(ConsentError::WrongState { op, state: self.state })
        }
    }

    fn expect_variant(&self, op: &'static str, variant: ConsentVariant) -> Result<(), ConsentError> {
        if self.variant == variant {
            Ok(())
        } else {
            Err(ConsentError::WrongVariant { op, variant: self.variant })
        }
    }

    /// The driver follows the emailed link and approves on the aggregator
    /// portal. Simple flows continue on the OEM portal; complex flows start
    /// identity verification.
    pub fn accept_link(&mut self, token: &str, signer: &LinkSigner, now: Timestamp) -> Result<(), ConsentError> {
        self.expect_state("accept_link", &[ConsentState::EmailSent])?;
        if self.link_used {
            return Err(ConsentError::LinkAlreadyUsed);
        }
        let link = self.link.as_ref().ok_or(ConsentError::InvalidLink(LinkError::Malformed))?;
        if link.token != token {
            return Err(ConsentError::InvalidLink(LinkError::BadSignature));
        }
        signer.verify(token, &self.vin, now).map_err(ConsentError::InvalidLink)?;
        let next = match self.variant {
            ConsentVariant::SimplePortal => ConsentState::AwaitingOemConfirmation,
            ConsentVariant::StellantisComplex => ConsentState::IdentityVerification,
        };
        self.transition(next, now)?;
        self.link_used = true;
        Ok(())
    }

    pub fn confirm_on_oem_portal(
        &mut self,
        approved: bool,
        credentials: Option<CredentialPair>,
        now: Timestamp,
    ) -> Result<(), ConsentError> {
        self.expect_variant("confirm_on_oem_portal", ConsentVariant::SimplePortal)?;
        self.expect_state("confirm_on_oem_portal", &[ConsentState::AwaitingOemConfirmation])?;
        if approved {
            let creds = credentials.ok_or(ConsentError::MissingCredentials)?;
            self.transition(ConsentState::Active, now)?;
            self.granted_at = Some(time::to_millis(now));
            self.access_token = Some(creds.access);
            self.refresh_token = Some(creds.refresh);
        } else {
            self.transition(ConsentState::Revoked, now)?;
            self.revocation = Some(Revocation { at: time::to_millis(now), source: RevocationSource::DriverPortal });
        }
        Ok(())
    }

    /// Returns `true` when this failure crossed the retry limit and raised the support flag.
    pub fn verify_identity(&mut self, passed: bool, policy: &ConsentPolicy, now: Timestamp) -> Result<bool, ConsentError> {
        self.expect_state("verify_identity", &[ConsentState::IdentityVerification])?;
        if passed {
            self.transition(ConsentState::PrivacySettings, now)?;
            return Ok(false);
        }
        self.identity_failures += 1;
        let escalate = !self.support_flag && self.identity_failures >= policy.identity_retry_limit;
        if escalate {
            self.support_flag = true;
        }
        Ok(escalate)
    }

    pub fn configure_privacy_settings(
        &mut self,
        chosen: PrivacyMechanism,
        installed: PrivacyMechanism,
        now: Timestamp,
    ) -> Result<(), ConsentError> {
        self.expect_state("configure_privacy_settings", &[ConsentState::PrivacySettings])?;
        if chosen != installed {
            return Err(ConsentError::MechanismMismatch { installed, chosen });
        }
        self.privacy_mechanism = Some(chosen);
        self.transition(ConsentState::TransmissionTest, now)
    }

    /// Records a transmission test run. A failed test leaves the state
    /// unchanged and surfaces a workshop advisory.
    pub fn run_transmission_test(&mut self, run: TransmissionTestRun) -> Result<(), ConsentError> {
        self.expect_state("run_transmission_test", &[ConsentState::TransmissionTest])?;
        let finished = run.finished_at;
        let ok = run.succeeded;
        self.transmission_test = Some(run);
        if ok {
            self.advisory = None;
            self.background_started_at = Some(finished);
            self.transition(ConsentState::BackgroundProcessing, finished)
        } else {
            self.advisory = Some(
                "transmission test failed: visit a Stellantis workshop before retrying".to_string(),
            );
            Ok(())
        }
    }

    pub fn complete_background_processing(
        &mut self,
        trips_since_test: usize,
        policy: &ConsentPolicy,
        now: Timestamp,
    ) -> Result<(), ConsentError> {
        self.expect_state("complete_background_processing", &[ConsentState::BackgroundProcessing])?;
        let started = self.background_started_at.unwrap_or(now);
        let ready_at = started + Duration::days(policy.background_min_days);
        if now < ready_at {
            return Err(ConsentError::BackgroundStillRunning(ready_at));
        }
        if trips_since_test == 0 {
            return Err(ConsentError::CarNotDriven);
        }
        self.transition(ConsentState::AwaitingOdometerReport, now)
    }

    /// Records a driver odometer report. Activates an awaiting or expired
    /// consent; on an active one it renews the quarterly deadline.
    /// `known_floor_km` is the highest odometer already stored for the VIN.
    pub fn report_odometer(
        &mut self,
        km: f64,
        at: Timestamp,
        known_floor_km: Option<f64>,
        credentials: Option<CredentialPair>,
    ) -> Result<(), ConsentError> {
        self.expect_state(
            "report_odometer",
            &[ConsentState::AwaitingOdometerReport, ConsentState::Active, ConsentState::Expired],
        )?;
        if !km.is_finite() || km < 0.0 {
            return Err(ConsentError::InvalidOdometer);
        }
        let floor = [self.last_reported_odometer_km, known_floor_km]
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        if let Some(floor_km) = floor.filter(|f| km < *f) {
            return Err(ConsentError::OdometerRegression { km, floor_km });
        }
        if self.state != ConsentState::Active {
            if self.access_token.is_none() {
                let creds = credentials.ok_or(ConsentError::MissingCredentials)?;
                self.access_token = Some(creds.access);
                self.refresh_token = Some(creds.refresh);
            }
            self.transition(ConsentState::Active, at)?;
            self.granted_at.get_or_insert(time::to_millis(at));
        }
        self.last_odometer_report_at = Some(time::to_millis(at));
        self.last_reported_odometer_km = Some(km);
        Ok(())
    }

    /// Revokes the consent; returns the credential references to invalidate.
    pub fn revoke(&mut self, source: RevocationSource, now: Timestamp) -> Result<Vec<CredentialRef>, ConsentError> {
        if self.state == ConsentState::Revoked {
            return Err(ConsentError::AlreadyRevoked);
        }
        self.transition(ConsentState::Revoked, now)?;
        self.revocation = Some(Revocation { at: time::to_millis(now), source });
        Ok([self.access_token.take(), self.refresh_token.take()].into_iter().flatten().collect())
    }

    /// Complex-variant expiry: `Active -> Expired` once the last odometer
    /// report is older than the policy allows. Returns whether it expired.
    pub fn sweep_expiry(&mut self, policy: &ConsentPolicy, now: Timestamp) -> bool {
        if self.variant != ConsentVariant::StellantisComplex || self.state != ConsentState::Active {
            return false;
        }
        let Some(last) = self.last_odometer_report_at else {
            return false;
        };
        let deadline = last + policy.report_validity();
        if now >= deadline {
            self.transition(ConsentState::Expired, deadline)
                .expect("active -> expired is declared for the complex flow");
            return true;
        }
        false
    }

    /// Whether data may be collected at `now`. Applies the quarterly rule
    /// directly so a late sweep can never widen the active window.
    pub fn permits_collection(&self, policy: &ConsentPolicy, now: Timestamp) -> bool {
        if self.state != ConsentState::Active {
            return false;
        }
        match self.variant {
            ConsentVariant::SimplePortal => true,
            ConsentVariant::StellantisComplex => self
                .last_odometer_report_at
                .is_some_and(|last| now - last < policy.report_validity()),
        }
    }

    /// `[start, end)` intervals spent in `Active`; the last may be open.
    pub fn active_intervals(&self) -> Vec<(Timestamp, Option<Timestamp>)> {
        let mut out = Vec::new();
        let mut open: Option<Timestamp> = None;
        for t in &self.history {
            if t.to == ConsentState::Active && open.is_none() {
                open = Some(t.at);
            } else if t.from == ConsentState::Active && t.to != ConsentState::Active {
                if let Some(start) = open.take() {
                    out.push((start, Some(t.at)));
                }
            }
        }
        if let Some(start) = open {
            out.push((start, None));
        }
        out
    }

    pub fn was_active_at(&self, t: Timestamp) -> bool {
        self.active_intervals()
            .iter()
            .any(|(start, end)| t >= *start && end.is_none_or(|e| t < e))
    }

    /// Days left before a complex-variant consent needs a new odometer report.
    pub fn days_until_report_due(&self, policy: &ConsentPolicy, now: Timestamp) -> Option<i64> {
        if self.variant != ConsentVariant::StellantisComplex {
            return None;
        }
        let last = self.last_odometer_report_at?;
        Some((last + policy.report_validity() - now).num_days())
    }
}

#[cfg(test)]
mod tests;
