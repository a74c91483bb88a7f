use std::collections::BTreeMap;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::consent::{CredentialPair, CredentialRef};
use crate::domain::Vin;
use crate::simulator::AccessTokenGrant;
use crate::time::{self, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredGrant {
    pub access_token: String,
    pub refresh_token: String,
    #[serde(with = "time::rfc3339")]
    pub expires_at: Timestamp,
    pub generation: u32,
}

/// OAuth secrets per VIN. Consent records only hold [`CredentialRef`]s into it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenVault {
    grants: BTreeMap<Vin, StoredGrant>,
}

impl TokenVault {
    pub fn store(&mut self, vin: &Vin, grant: &AccessTokenGrant, now: Timestamp) -> CredentialPair {
        let generation = self.grants.get(vin).map_or(1, |g| g.generation + 1);
        self.grants.insert(
            vin.clone(),
            StoredGrant {
                access_token: grant.access_token.clone(),
                refresh_token: grant.refresh_token.clone(),
                expires_at: time::to_millis(now + Duration::seconds(grant.expires_in)),
                generation,
            },
        );
        Self::refs(vin)
    }

    pub fn refs(vin: &Vin) -> CredentialPair {
        CredentialPair {
            access: CredentialRef(format!("vault:{vin}:access")),
            refresh: CredentialRef(format!("vault:{vin}:refresh")),
        }
    }

    pub fn get(&self, vin: &Vin) -> Option<&StoredGrant> {
        self.grants.get(vin)
    }

    pub fn is_expired(&self, vin: &Vin, now: Timestamp) -> bool {
        self.grants.get(vin).is_some_and(|g| now >= g.expires_at)
    }

    pub fn remove(&mut self, vin: &Vin) -> bool {
        self.grants.remove(vin).is_some()
    }
}
