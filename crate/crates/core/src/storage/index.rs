use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{SampleRejection, SeriesEntry, TimeRange};
use crate::domain::{DataPointKind, NotificationEvent, SampleSource, SampleValue, TelemetrySample, Vin};
use crate::time::Timestamp;

type PointKey = (Timestamp, SampleSource);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct VinSeries {
    points: BTreeMap<DataPointKind, BTreeMap<PointKey, SampleValue>>,
    events: BTreeMap<(Timestamp, String), NotificationEvent>,
}

/// Ordered in-memory index shared by every series store implementation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesIndex {
    vins: BTreeMap<Vin, VinSeries>,
    delivery_ids: BTreeSet<String>,
}

impl SeriesIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks a sample against the committed points without inserting it.
    pub fn check(&self, s: &TelemetrySample) -> Result<(), SampleRejection> {
        let key = (s.observed_at, s.source);
        let Some(series) = self.vins.get(&s.vin).and_then(|v| v.points.get(&s.kind)) else {
            return Ok(());
        };
        if series.contains_key(&key) {
            return Err(SampleRejection::DuplicatePoint);
        }
        if s.kind == DataPointKind::Odometer {
            let km = s.value.as_km().unwrap_or(0.0);
            let before = series.range(..key).next_back().and_then(|(_, v)| v.as_km());
            if let Some(prev) = before.filter(|prev| km < *prev) {
                return Err(SampleRejection::OdometerRegression { km, neighbour_km: prev });
            }
            let after = series
                .range((Bound::Excluded(key), Bound::Unbounded))
                .next()
                .and_then(|(_, v)| v.as_km());
            if let Some(next) = after.filter(|next| km > *next) {
                return Err(SampleRejection::OdometerRegression { km, neighbour_km: next });
            }
        }
        Ok(())
    }

    /// Inserts a sample that passed [`SeriesIndex::check`].
    pub(crate) fn insert_checked(&mut self, s: &TelemetrySample) {
        self.vins
            .entry(s.vin.clone())
            .or_default()
            .points
            .entry(s.kind)
            .or_default()
            .insert((s.observed_at, s.source), s.value.clone());
    }

    pub fn has_event(&self, delivery_id: &str) -> bool {
        self.delivery_ids.contains(delivery_id)
    }

    pub(crate) fn insert_event(&mut self, e: &NotificationEvent) -> bool {
        if !self.delivery_ids.insert(e.delivery_id.clone()) {
            return false;
        }
        self.vins
            .entry(e.vin.clone())
            .or_default()
            .events
            .insert((e.emitted_at, e.delivery_id.clone()), e.clone());
        true
    }

    /// Applies a journal entry, ignoring anything already present.
    pub(crate) fn apply(&mut self, entry: &SeriesEntry) -> bool {
        match entry {
            SeriesEntry::Sample(s) => {
                if self.check(s).is_ok() {
                    self.insert_checked(s);
                    true
                } else {
                    false
                }
            }
            SeriesEntry::Event(e) => self.insert_event(e),
        }
    }

    pub fn vins(&self) -> Vec<Vin> {
        self.vins.keys().cloned().collect()
    }

    pub fn query_series(
        &self,
        vin: &Vin,
        kind: DataPointKind,
        range: TimeRange,
        downsample: Option<Duration>,
    ) -> Vec<TelemetrySample> {
        let Some(series) = self.vins.get(vin).and_then(|v| v.points.get(&kind)) else {
            return Vec::new();
        };
        let points = series
            .iter()
            .filter(|((t, _), _)| range.contains(*t))
            .map(|((t, src), value)| TelemetrySample {
                vin: vin.clone(),
                kind,
                value: value.clone(),
                observed_at: *t,
                source: *src,
            });
        match downsample {
            Some(bucket) if bucket > Duration::zero() => {
                let width = bucket.num_milliseconds().max(1);
                let mut out: Vec<TelemetrySample> = Vec::new();
                let mut current: Option<i64> = None;
                for p in points {
                    let b = p.observed_at.timestamp_millis().div_euclid(width);
                    if current == Some(b) {
                        *out.last_mut().expect("bucket already opened") = p;
                    } else {
                        current = Some(b);
                        out.push(p);
                    }
                }
                out
            }
            _ => points.collect(),
        }
    }

    pub fn last_known(&self, vin: &Vin, kinds: &[DataPointKind]) -> BTreeMap<DataPointKind, TelemetrySample> {
        let mut out = BTreeMap::new();
        let Some(v) = self.vins.get(vin) else {
            return out;
        };
        for &kind in kinds {
            if let Some(((t, src), value)) = v.points.get(&kind).and_then(|s| s.iter().next_back()) {
                out.insert(
                    kind,
                    TelemetrySample {
                        vin: vin.clone(),
                        kind,
                        value: value.clone(),
                        observed_at: *t,
                        source: *src,
                    },
                );
            }
        }
        out
    }

    pub fn events(&self, vin: &Vin, range: TimeRange) -> Vec<NotificationEvent> {
        self.vins
            .get(vin)
            .map(|v| v.events.values().filter(|e| range.contains(e.emitted_at)).cloned().collect())
            .unwrap_or_default()
    }

    /// Every entry of `vin`, chronological; ties broken by kind then source,
    /// samples before events.
    pub fn entries(&self, vin: &Vin) -> Vec<SeriesEntry> {
        let Some(v) = self.vins.get(vin) else {
            return Vec::new();
        };
        let mut keyed: Vec<((Timestamp, u8, String), SeriesEntry)> = Vec::new();
        for (kind, series) in &v.points {
            for ((t, src), value) in series {
                let sample = TelemetrySample {
                    vin: vin.clone(),
                    kind: *kind,
                    value: value.clone(),
                    observed_at: *t,
                    source: *src,
                };
                keyed.push(((*t, 0, format!("{}/{}", kind.as_str(), src)), SeriesEntry::Sample(sample)));
            }
        }
        for ((t, id), e) in &v.events {
            keyed.push(((*t, 1, id.clone()), SeriesEntry::Event(e.clone())));
        }
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.into_iter().map(|(_, e)| e).collect()
    }

    pub fn all_entries(&self) -> Vec<SeriesEntry> {
        self.vins.keys().flat_map(|v| self.entries(v)).collect()
    }

    pub fn sample_count(&self, vin: &Vin) -> usize {
        self.vins
            .get(vin)
            .map(|v| v.points.values().map(BTreeMap::len).sum())
            .unwrap_or(0)
    }

    pub fn event_count(&self, vin: &Vin) -> usize {
        self.vins.get(vin).map(|v| v.events.len()).unwrap_or(0)
    }

    /// Data points in the time-series sense: one per distinct
    /// `(timestamp, source)` observation across all kinds, plus one per
    /// stored notification event.
    pub fn data_point_count(&self, vin: &Vin) -> usize {
        let Some(v) = self.vins.get(vin) else {
            return 0;
        };
        let observations: BTreeSet<&PointKey> = v.points.values().flat_map(BTreeMap::keys).collect();
        observations.len() + v.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vins.is_empty()
    }
}
