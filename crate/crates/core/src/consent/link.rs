use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::domain::Vin;
use crate::signing;
use crate::time::{self, Timestamp};

/// Default lifetime of an emailed consent link.
pub const LINK_VALIDITY_HOURS: i64 = 72;

/// A signed, single-use consent hyperlink token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentLink {
    pub token: String,
    #[serde(with = "time::rfc3339")]
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LinkClaims {
    vin: Vin,
    email: String,
    exp: i64,
    n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkError {
    Malformed,
    BadSignature,
    Expired,
    WrongSubject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSigner {
    secret: Vec<u8>,
    validity_secs: i64,
}

impl LinkSigner {
    pub fn new(secret: impl Into<Vec<u8>>) -> Self {
        Self { secret: secret.into(), validity_secs: LINK_VALIDITY_HOURS * 3600 }
    }

    pub fn with_validity(mut self, validity: Duration) -> Self {
        self.validity_secs = validity.num_seconds();
        self
    }

    /// `nonce` distinguishes successive enrolments of the same VIN.
    pub fn issue(&self, vin: &Vin, email: &str, nonce: u32, now: Timestamp) -> ConsentLink {
        let expires_at = time::to_millis(now + Duration::seconds(self.validity_secs));
        let claims = LinkClaims {
            vin: vin.clone(),
            email: email.to_ascii_lowercase(),
            exp: expires_at.timestamp_millis(),
            n: nonce,
        };
        let payload = URL_SAFE_NO_PAD.encode(serde_json::to_vec(&claims).expect("claims serialize"));
        let sig = signing::hmac_sha256_hex(&self.secret, payload.as_bytes());
        ConsentLink { token: format!("{payload}.{sig}"), expires_at }
    }

    pub fn verify(&self, token: &str, vin: &Vin, now: Timestamp) -> Result<(), LinkError> {
        let (payload, sig) = token.split_once('.').ok_or(LinkError::Malformed)?;
        if !signing::verify_hmac_sha256_hex(&self.secret, payload.as_bytes(), sig) {
            return Err(LinkError::BadSignature);
        }
        let raw = URL_SAFE_NO_PAD.decode(payload).map_err(|_| LinkError::Malformed)?;
        let claims: LinkClaims = serde_json::from_slice(&raw).map_err(|_| LinkError::Malformed)?;
        if &claims.vin != vin {
            return Err(LinkError::WrongSubject);
        }
        if now.timestamp_millis() > claims.exp {
            return Err(LinkError::Expired);
        }
        Ok(())
    }
}
