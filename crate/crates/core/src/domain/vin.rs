use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const VIN_LENGTH: usize = 17;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VinError {
    #[error("VIN must be exactly {VIN_LENGTH} characters, got {0}")]
    BadLength(usize),
    #[error("character {0:?} is not allowed in a VIN")]
    ForbiddenCharacter(char),
}

/// A validated 17-character vehicle identification number, stored uppercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vin(String);

impl Vin {
    pub fn parse(raw: &str) -> Result<Self, VinError> {
        let trimmed = raw.trim();
        let len = trimmed.chars().count();
        if len != VIN_LENGTH {
            return Err(VinError::BadLength(len));
        }
        let mut normalized = String::with_capacity(VIN_LENGTH);
        for c in trimmed.chars() {
            let up = c.to_ascii_uppercase();
            if !up.is_ascii_alphanumeric() || matches!(up, 'I' | 'O' | 'Q') {
                return Err(VinError::ForbiddenCharacter(c));
            }
            normalized.push(up);
        }
        Ok(Self(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// World manufacturer identifier: the first three characters.
    pub fn wmi(&self) -> &str {
        &self.0[..3]
    }
}

impl fmt::Display for Vin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Vin {
    type Err = VinError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl AsRef<str> for Vin {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl Serialize for Vin {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Vin {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Vin::parse(&raw).map_err(serde::de::Error::custom)
    }
}
