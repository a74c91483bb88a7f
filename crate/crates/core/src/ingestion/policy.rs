use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveTime;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::{BrandId, DataPointKind, NotificationKind, OemProfile, ProfileRegistry, QuotaWindow};
use crate::time::hms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionMode {
    ScheduledPolls,
    NotificationTriggered,
}

/// How the platform collects data for one brand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionPolicy {
    pub brand: BrandId,
    pub mode: CollectionMode,
    /// Vehicle-local times of day, for scheduled polls.
    #[serde(default)]
    pub poll_times: Vec<NaiveTime>,
    #[serde(default)]
    pub poll_kinds: BTreeSet<DataPointKind>,
    #[serde(default)]
    pub on_notification: BTreeMap<NotificationKind, BTreeSet<DataPointKind>>,
}

impl CollectionPolicy {
    /// Odometer polls at 05:00 and 22:00.
    pub fn mercedes_like(brand: BrandId) -> Self {
        Self {
            brand,
            mode: CollectionMode::ScheduledPolls,
            poll_times: vec![hms(5, 0, 0), hms(22, 0, 0)],
            poll_kinds: [DataPointKind::Odometer].into(),
            on_notification: BTreeMap::new(),
        }
    }

    /// Every requestable data point on each location change.
    pub fn bmw_like(profile: &OemProfile) -> Self {
        Self {
            brand: profile.brand.clone(),
            mode: CollectionMode::NotificationTriggered,
            poll_times: Vec::new(),
            poll_kinds: BTreeSet::new(),
            on_notification: [(NotificationKind::LocationChange, profile.request_kinds.clone())].into(),
        }
    }

    /// Daily-quota odometer brands poll; the rest follow notifications.
    pub fn default_for(profile: &OemProfile) -> Self {
        let odometer_only = profile.request_quota.window == QuotaWindow::LocalDay
            || !profile.notification_kinds.contains(&NotificationKind::LocationChange);
        if odometer_only && profile.supports_request(DataPointKind::Odometer) {
            Self::mercedes_like(profile.brand.clone())
        } else {
            Self::bmw_like(profile)
        }
    }

    pub fn kinds_for(&self, kind: NotificationKind) -> Option<&BTreeSet<DataPointKind>> {
        self.on_notification.get(&kind).filter(|k| !k.is_empty())
    }

    pub fn validate(&self, profile: &OemProfile) -> Result<(), IngestError> {
        let requested = self.poll_kinds.iter().chain(self.on_notification.values().flatten());
        if let Some(k) = requested.into_iter().find(|k| !profile.supports_request(**k)) {
            return Err(IngestError::Policy(format!("{}: {k} is not requestable", self.brand)));
        }
        if self.mode == CollectionMode::ScheduledPolls && (self.poll_times.is_empty() || self.poll_kinds.is_empty()) {
            return Err(IngestError::Policy(format!("{}: scheduled polls need times and kinds", self.brand)));
        }
        Ok(())
    }
}

/// One policy per registered brand; brands without an explicit entry get [`CollectionPolicy::default_for`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    policies: BTreeMap<BrandId, CollectionPolicy>,
}

impl PolicySet {
    pub fn defaults(registry: &ProfileRegistry) -> Self {
        let policies = registry.profiles().map(|p| (p.brand.clone(), CollectionPolicy::default_for(p))).collect();
        Self { policies }
    }

    /// Defaults overridden by a JSON array of policies.
    pub fn from_json(raw: &str, registry: &ProfileRegistry) -> Result<Self, IngestError> {
        let list: Vec<CollectionPolicy> = serde_json::from_str(raw).map_err(|e| IngestError::Policy(e.to_string()))?;
        Self::with_overrides(list, registry)
    }

    pub fn with_overrides(list: Vec<CollectionPolicy>, registry: &ProfileRegistry) -> Result<Self, IngestError> {
        let mut set = Self::defaults(registry);
        for mut p in list {
            let profile = registry.profile_for(p.brand.as_str()).map_err(|e| IngestError::Policy(e.to_string()))?;
            p.brand = profile.brand.clone();
            p.validate(profile)?;
            set.policies.insert(p.brand.clone(), p);
        }
        Ok(set)
    }

    pub fn get(&self, brand: &BrandId) -> Option<&CollectionPolicy> {
        self.policies.get(brand)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CollectionPolicy> {
        self.policies.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_brands_get_their_archetype() {
        let reg = ProfileRegistry::builtin();
        let set = PolicySet::defaults(&reg);
        let merc = set.get(&BrandId::new("mercedes")).unwrap();
        assert_eq!(merc.mode, CollectionMode::ScheduledPolls);
        assert_eq!(merc.poll_times, vec![hms(5, 0, 0), hms(22, 0, 0)]);
        assert_eq!(merc.poll_kinds, [DataPointKind::Odometer].into());
        let bmw = set.get(&BrandId::new("bmw")).unwrap();
        assert_eq!(bmw.mode, CollectionMode::NotificationTriggered);
        assert_eq!(
            bmw.kinds_for(NotificationKind::LocationChange).unwrap(),
            &reg.profile_for("bmw").unwrap().request_kinds
        );
        assert!(bmw.kinds_for(NotificationKind::AccidentReported).is_none());
    }

    #[test]
    fn json_overrides_are_validated() {
        let reg = ProfileRegistry::builtin();
        let ok = r#"[{"brand":"mercedes-like","mode":"scheduled_polls","poll_times":["06:00:00"],"poll_kinds":["odometer"]}]"#;
        let set = PolicySet::from_json(ok, &reg).unwrap();
        assert_eq!(set.get(&BrandId::new("mercedes")).unwrap().poll_times, vec![hms(6, 0, 0)]);
        let bad = r#"[{"brand":"mercedes","mode":"scheduled_polls","poll_times":["06:00:00"],"poll_kinds":["gps_coordinates"]}]"#;
        assert!(matches!(PolicySet::from_json(bad, &reg), Err(IngestError::Policy(_))));
    }
}
