use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::ConsentVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentState {
    Initiated,
    EmailSent,
    AwaitingOemConfirmation,
    IdentityVerification,
    PrivacySettings,
    TransmissionTest,
    BackgroundProcessing,
    AwaitingOdometerReport,
    Active,
    Expired,
    Revoked,
}

impl ConsentState {
    pub const ALL: &'static [ConsentState] = &[
        ConsentState::Initiated,
        ConsentState::EmailSent,
        ConsentState::AwaitingOemConfirmation,
        ConsentState::IdentityVerification,
        ConsentState::PrivacySettings,
        ConsentState::TransmissionTest,
        ConsentState::BackgroundProcessing,
        ConsentState::AwaitingOdometerReport,
        ConsentState::Active,
        ConsentState::Expired,
        ConsentState::Revoked,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConsentState::Initiated => "initiated",
            ConsentState::EmailSent => "email_sent",
            ConsentState::AwaitingOemConfirmation => "awaiting_oem_confirmation",
            ConsentState::IdentityVerification => "identity_verification",
            ConsentState::PrivacySettings => "privacy_settings",
            ConsentState::TransmissionTest => "transmission_test",
            ConsentState::BackgroundProcessing => "background_processing",
            ConsentState::AwaitingOdometerReport => "awaiting_odometer_report",
            ConsentState::Active => "active",
            ConsentState::Expired => "expired",
            ConsentState::Revoked => "revoked",
        }
    }
}

impl fmt::Display for ConsentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

use ConsentState as S;

const SIMPLE_PORTAL_EDGES: &[(ConsentState, ConsentState)] = &[
    (S::Initiated, S::EmailSent),
    (S::EmailSent, S::AwaitingOemConfirmation),
    (S::AwaitingOemConfirmation, S::Active),
    (S::AwaitingOemConfirmation, S::Revoked),
    (S::Initiated, S::Revoked),
    (S::EmailSent, S::Revoked),
    (S::Active, S::Revoked),
];

const STELLANTIS_EDGES: &[(ConsentState, ConsentState)] = &[
    (S::Initiated, S::EmailSent),
    (S::EmailSent, S::IdentityVerification),
    (S::IdentityVerification, S::PrivacySettings),
    (S::PrivacySettings, S::TransmissionTest),
    (S::TransmissionTest, S::BackgroundProcessing),
    (S::BackgroundProcessing, S::AwaitingOdometerReport),
    (S::AwaitingOdometerReport, S::Active),
    (S::Active, S::Expired),
    (S::Expired, S::Active),
    (S::Initiated, S::Revoked),
    (S::EmailSent, S::Revoked),
    (S::IdentityVerification, S::Revoked),
    (S::PrivacySettings, S::Revoked),
    (S::TransmissionTest, S::Revoked),
    (S::BackgroundProcessing, S::Revoked),
    (S::AwaitingOdometerReport, S::Revoked),
    (S::Active, S::Revoked),
    (S::Expired, S::Revoked),
];

/// Every transition the variant's state machine may take.
pub fn declared_edges(variant: ConsentVariant) -> &'static [(ConsentState, ConsentState)] {
    match variant {
        ConsentVariant::SimplePortal => SIMPLE_PORTAL_EDGES,
        ConsentVariant::StellantisComplex => STELLANTIS_EDGES,
    }
}

pub fn is_declared_edge(variant: ConsentVariant, from: ConsentState, to: ConsentState) -> bool {
    declared_edges(variant).contains(&(from, to))
}

/// States reachable in the variant, in workflow order.
pub fn states_of(variant: ConsentVariant) -> Vec<ConsentState> {
    ConsentState::ALL
        .iter()
        .copied()
        .filter(|s| declared_edges(variant).iter().any(|(a, b)| a == s || b == s))
        .collect()
}
