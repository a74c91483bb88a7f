use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kinds::{DataPointKind, NotificationKind};

/// Registry key of an OEM brand, a lowercase slug such as `bmw` or `alfa-romeo`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BrandId(String);

impl BrandId {
    pub fn new(raw: &str) -> Self {
        Self(raw.trim().to_ascii_lowercase().replace([' ', '_'], "-"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BrandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BrandId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentVariant {
    /// Consent confirmed on the manufacturer portal.
    SimplePortal,
    /// Identity check, in-car privacy settings, transmission test, background
    /// processing and quarterly odometer reports.
    StellantisComplex,
}

/// In-car mechanism used to enable data transmission in the privacy settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyMechanism {
    DoublePush,
    ScreenV1,
    ScreenV2,
    ScreenV3,
}

impl std::str::FromStr for PrivacyMechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "double_push" => Ok(Self::DoublePush),
            "screen_v1" => Ok(Self::ScreenV1),
            "screen_v2" => Ok(Self::ScreenV2),
            "screen_v3" => Ok(Self::ScreenV3),
            other => Err(format!("unknown privacy mechanism {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaWindow {
    /// Any window of `window_secs` ending now.
    Sliding,
    /// Calendar day in vehicle-local time, reset at local midnight.
    LocalDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestQuota {
    pub max_requests: u32,
    pub window_secs: u64,
    pub window: QuotaWindow,
}

impl RequestQuota {
    pub fn per_minute(max_requests: u32) -> Self {
        Self { max_requests, window_secs: 60, window: QuotaWindow::Sliding }
    }

    pub fn per_local_day(max_requests: u32) -> Self {
        Self { max_requests, window_secs: 86_400, window: QuotaWindow::LocalDay }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OemProfile {
    pub brand: BrandId,
    pub display_name: String,
    pub notification_kinds: BTreeSet<NotificationKind>,
    pub request_kinds: BTreeSet<DataPointKind>,
    pub request_quota: RequestQuota,
    pub consent_variant: ConsentVariant,
    pub monthly_data_cost_eur: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("unknown brand {0:?}")]
    UnknownBrand(String),
    #[error("profile {0}: notification kinds must include revoke_of_consent")]
    MissingRevoke(BrandId),
    #[error("profile {0}: quota needs max_requests >= 1 and a positive window")]
    BadQuota(BrandId),
    #[error("profile {0}: a local-day quota must use an 86400 s window")]
    BadDayWindow(BrandId),
    #[error("profile {0}: monthly data cost must be finite and non-negative")]
    BadCost(BrandId),
    #[error("duplicate brand {0}")]
    Duplicate(BrandId),
    #[error("alias {alias:?} points at unregistered brand {target}")]
    DanglingAlias { alias: String, target: BrandId },
    #[error("profile config: {0}")]
    Config(String),
}

impl OemProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if !self.notification_kinds.contains(&NotificationKind::RevokeOfConsent) {
            return Err(ProfileError::MissingRevoke(self.brand.clone()));
        }
        let q = &self.request_quota;
        if q.max_requests < 1 || q.window_secs == 0 {
            return Err(ProfileError::BadQuota(self.brand.clone()));
        }
        if q.window == QuotaWindow::LocalDay && q.window_secs != 86_400 {
            return Err(ProfileError::BadDayWindow(self.brand.clone()));
        }
        if !self.monthly_data_cost_eur.is_finite() || self.monthly_data_cost_eur < 0.0 {
            return Err(ProfileError::BadCost(self.brand.clone()));
        }
        Ok(())
    }

    pub fn supports_request(&self, kind: DataPointKind) -> bool {
        self.request_kinds.contains(&kind)
    }

    /// BMW archetype: rich catalogue, notification-driven.
    pub fn bmw_like() -> Self {
        use DataPointKind as D;
        use NotificationKind as N;
        Self {
            brand: BrandId::new("bmw"),
            display_name: "BMW".into(),
            notification_kinds: [
                N::AccidentReported,
                N::BatteryWarning,
                N::BreakdownReported,
                N::EmergencyReported,
                N::EngineChanged,
                N::MaintenanceChanged,
                N::RevokeOfConsent,
                N::LocationChange,
            ]
            .into(),
            request_kinds: [
                D::OutsideTemperature,
                D::BrakeFluidChangeDate,
                D::AccelerationEvaluation,
                D::DrivingStyle,
                D::DoorsLockState,
                D::HoodPosition,
                D::GpsCoordinates,
                D::Heading,
                D::Odometer,
                D::DistanceToNextMaintenance,
                D::FuelVolume,
            ]
            .into(),
            request_quota: RequestQuota::per_minute(50),
            consent_variant: ConsentVariant::SimplePortal,
            monthly_data_cost_eur: 6.5,
        }
    }

    /// Mercedes archetype: odometer only, two requests per day.
    pub fn mercedes_like() -> Self {
        Self {
            brand: BrandId::new("mercedes"),
            display_name: "Mercedes-Benz".into(),
            notification_kinds: [NotificationKind::RevokeOfConsent].into(),
            request_kinds: [DataPointKind::Odometer].into(),
            request_quota: RequestQuota::per_local_day(2),
            consent_variant: ConsentVariant::SimplePortal,
            monthly_data_cost_eur: 2.1,
        }
    }

    /// Stellantis archetype: GPS-capable catalogue behind the complex consent flow.
    pub fn stellantis_like(brand: &str, display_name: &str) -> Self {
        use DataPointKind as D;
        use NotificationKind as N;
        Self {
            brand: BrandId::new(brand),
            display_name: display_name.into(),
            notification_kinds: [
                N::AccidentReported,
                N::BreakdownReported,
                N::EmergencyReported,
                N::RevokeOfConsent,
                N::LocationChange,
            ]
            .into(),
            request_kinds: [
                D::GpsCoordinates,
                D::Heading,
                D::Odometer,
                D::FuelVolume,
                D::DistanceToNextMaintenance,
                D::DoorsLockState,
            ]
            .into(),
            request_quota: RequestQuota::per_minute(50),
            consent_variant: ConsentVariant::StellantisComplex,
            monthly_data_cost_eur: 6.5,
        }
    }
}

/// Config-driven registry of OEM profiles. Read-only once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRegistry {
    profiles: BTreeMap<BrandId, OemProfile>,
    #[serde(default)]
    aliases: BTreeMap<String, BrandId>,
}

#[derive(Deserialize)]
struct RegistryFile {
    profiles: Vec<OemProfile>,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
}

impl ProfileRegistry {
    pub fn empty() -> Self {
        Self { profiles: BTreeMap::new(), aliases: BTreeMap::new() }
    }

    /// The shipped archetypes: `bmw`, `mercedes`, and the Stellantis group
    /// brands `peugeot`, `citroen`, `fiat`, `alfa-romeo`. The aliases
    /// `bmw-like`, `mercedes-like` and `stellantis-like` resolve to them.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for p in [
            OemProfile::bmw_like(),
            OemProfile::mercedes_like(),
            OemProfile::stellantis_like("peugeot", "Peugeot"),
            OemProfile::stellantis_like("citroen", "Citroen"),
            OemProfile::stellantis_like("fiat", "Fiat"),
            OemProfile::stellantis_like("alfa-romeo", "Alfa Romeo"),
        ] {
            reg.register(p).expect("builtin profiles are valid");
        }
        for (alias, target) in [
            ("bmw-like", "bmw"),
            ("mercedes-like", "mercedes"),
            ("mercedes-benz", "mercedes"),
            ("stellantis-like", "peugeot"),
        ] {
            reg.add_alias(alias, BrandId::new(target)).expect("builtin alias targets exist");
        }
        reg
    }

    /// Loads `{"profiles": [...], "aliases": {...}}`.
    pub fn from_json(raw: &str) -> Result<Self, ProfileError> {
        let file: RegistryFile =
            serde_json::from_str(raw).map_err(|e| ProfileError::Config(e.to_string()))?;
        let mut reg = Self::empty();
        for p in file.profiles {
            reg.register(p)?;
        }
        for (alias, target) in file.aliases {
            reg.add_alias(&alias, BrandId::new(&target))?;
        }
        Ok(reg)
    }

    pub fn register(&mut self, mut profile: OemProfile) -> Result<(), ProfileError> {
        profile.brand = BrandId::new(profile.brand.as_str());
        profile.validate()?;
        if self.profiles.contains_key(&profile.brand) {
            return Err(ProfileError::Duplicate(profile.brand));
        }
        self.profiles.insert(profile.brand.clone(), profile);
        Ok(())
    }

    pub fn add_alias(&mut self, alias: &str, target: BrandId) -> Result<(), ProfileError> {
        if !self.profiles.contains_key(&target) {
            return Err(ProfileError::DanglingAlias { alias: alias.to_string(), target });
        }
        self.aliases.insert(BrandId::new(alias).as_str().to_string(), target);
        Ok(())
    }

    pub fn resolve(&self, brand: &str) -> Result<&BrandId, ProfileError> {
        let key = BrandId::new(brand);
        if let Some((k, _)) = self.profiles.get_key_value(&key) {
            return Ok(k);
        }
        if let Some(target) = self.aliases.get(key.as_str()) {
            return Ok(target);
        }
        // display names such as "Alfa Romeo" or "Mercedes-Benz"
        self.profiles
            .values()
            .find(|p| BrandId::new(&p.display_name) == key)
            .map(|p| &p.brand)
            .ok_or_else(|| ProfileError::UnknownBrand(brand.to_string()))
    }

    pub fn profile_for(&self, brand: &str) -> Result<&OemProfile, ProfileError> {
        let id = self.resolve(brand)?;
        Ok(&self.profiles[id])
    }

    pub fn get(&self, brand: &BrandId) -> Option<&OemProfile> {
        self.profiles.get(brand)
    }

    pub fn contains(&self, brand: &BrandId) -> bool {
        self.profiles.contains_key(brand)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &OemProfile> {
        self.profiles.values()
    }
}

impl Default for ProfileRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
