//! OAuth 2.0 authorization-code and refresh-token grants for simulated OEMs.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DataPointKind, Vin};
use crate::time::{self, Timestamp};

pub const DEFAULT_ACCESS_TTL_SECS: i64 = 3600;
const CODE_TTL_SECS: i64 = 600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "grant_type", rename_all = "snake_case")]
pub enum GrantRequest {
    AuthorizationCode { code: String },
    RefreshToken { refresh_token: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTokenGrant {
    pub access_token: String,
    pub refresh_token: String,
    pub expires_in: i64,
    pub scope: BTreeSet<DataPointKind>,
    pub token_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum OAuthError {
    #[error("invalid grant")]
    InvalidGrant,
    #[error("consent revoked for this vehicle")]
    ConsentRevoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CodeEntry {
    vin: Vin,
    #[serde(with = "time::rfc3339")]
    expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct AccessEntry {
    vin: Vin,
    scope: BTreeSet<DataPointKind>,
    #[serde(with = "time::rfc3339")]
    expires_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenCheck {
    Valid,
    Expired,
    Unknown,
    WrongVehicle,
    OutOfScope(DataPointKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthServer {
    access_ttl_secs: i64,
    rng: ChaCha8Rng,
    codes: BTreeMap<String, CodeEntry>,
    access: BTreeMap<String, AccessEntry>,
    refresh: BTreeMap<String, (Vin, BTreeSet<DataPointKind>)>,
    revoked: BTreeSet<Vin>,
    /// Codes and refresh tokens invalidated by a revocation.
    revoked_tokens: BTreeSet<String>,
}

impl AuthServer {
    pub fn new(seed: u64, access_ttl_secs: i64) -> Self {
        Self {
            access_ttl_secs,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6f61_7574_68),
            codes: BTreeMap::new(),
            access: BTreeMap::new(),
            refresh: BTreeMap::new(),
            revoked: BTreeSet::new(),
            revoked_tokens: BTreeSet::new(),
        }
    }

    fn token(&mut self, prefix: &str) -> String {
        let bytes: [u8; 16] = self.rng.gen();
        format!("{prefix}_{}", hex::encode(bytes))
    }

    /// Issued by the OEM portal once the driver approves data sharing.
    /// Approval lifts any earlier revocation for the vehicle.
    pub fn issue_code(&mut self, vin: &Vin, now: Timestamp) -> String {
        self.revoked.remove(vin);
        let code = self.token("code");
        self.codes.insert(code.clone(), CodeEntry { vin: vin.clone(), expires_at: now + Duration::seconds(CODE_TTL_SECS) });
        code
    }

    pub fn exchange(
        &mut self,
        request: &GrantRequest,
        scope_of: impl Fn(&Vin) -> BTreeSet<DataPointKind>,
        now: Timestamp,
    ) -> Result<AccessTokenGrant, OAuthError> {
        let presented = match request {
            GrantRequest::AuthorizationCode { code } => code,
            GrantRequest::RefreshToken { refresh_token } => refresh_token,
        };
        if self.revoked_tokens.contains(presented) {
            return Err(OAuthError::ConsentRevoked);
        }
        let (vin, scope) = match request {
            GrantRequest::AuthorizationCode { code } => {
                let entry = self.codes.remove(code).ok_or(OAuthError::InvalidGrant)?;
                if now >= entry.expires_at {
                    return Err(OAuthError::InvalidGrant);
                }
                let scope = scope_of(&entry.vin);
                (entry.vin, scope)
            }
            GrantRequest::RefreshToken { refresh_token } => {
                let (vin, scope) = self.refresh.get(refresh_token).cloned().ok_or(OAuthError::InvalidGrant)?;
                if self.revoked.contains(&vin) {
                    return Err(OAuthError::ConsentRevoked);
                }
                self.refresh.remove(refresh_token);
                (vin, scope)
            }
        };
        if self.revoked.contains(&vin) {
            return Err(OAuthError::ConsentRevoked);
        }
        let access_token = self.token("at");
        let refresh_token = self.token("rt");
        self.access.insert(
            access_token.clone(),
            AccessEntry { vin: vin.clone(), scope: scope.clone(), expires_at: now + Duration::seconds(self.access_ttl_secs) },
        );
        self.refresh.insert(refresh_token.clone(), (vin, scope.clone()));
        Ok(AccessTokenGrant {
            access_token,
            refresh_token,
            expires_in: self.access_ttl_secs,
            scope,
            token_type: "Bearer".into(),
        })
    }

    pub fn check(&self, token: &str, vin: &Vin, kinds: &BTreeSet<DataPointKind>, now: Timestamp) -> TokenCheck {
        let Some(entry) = self.access.get(token) else {
            return TokenCheck::Unknown;
        };
        if &entry.vin != vin {
            return TokenCheck::WrongVehicle;
        }
        if now >= entry.expires_at {
            return TokenCheck::Expired;
        }
        if let Some(k) = kinds.iter().find(|k| !entry.scope.contains(k)) {
            return TokenCheck::OutOfScope(*k);
        }
        TokenCheck::Valid
    }

    /// Invalidates every credential held for `vin`.
    pub fn revoke(&mut self, vin: &Vin) {
        self.revoked.insert(vin.clone());
        let codes = self.codes.iter().filter(|(_, e)| &e.vin == vin).map(|(c, _)| c.clone());
        let refresh = self.refresh.iter().filter(|(_, (v, _))| v == vin).map(|(r, _)| r.clone());
        let dropped: Vec<String> = codes.chain(refresh).collect();
        self.revoked_tokens.extend(dropped);
        self.codes.retain(|_, e| &e.vin != vin);
        self.access.retain(|_, e| &e.vin != vin);
        self.refresh.retain(|_, (v, _)| v != vin);
    }

    pub fn is_revoked(&self, vin: &Vin) -> bool {
        self.revoked.contains(vin)
    }

    /// Drops expired access tokens and codes.
    pub fn purge(&mut self, now: Timestamp) {
        self.access.retain(|_, e| e.expires_at > now);
        self.codes.retain(|_, e| e.expires_at > now);
    }
}
