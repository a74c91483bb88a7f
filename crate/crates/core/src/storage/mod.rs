//! Dual persistence: a static store for drivers, vehicles, consents and
//! eligibility outcomes, and an append-only time-series store for telemetry
//! samples and notification events.
//!
//! Both stores sit behind narrow traits with an in-memory implementation and
//! a file-backed one (JSON-lines write-ahead segments for the series store,
//! an atomically replaced JSON document for the static store).

mod file;
mod index;
mod memory;
mod records;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DataPointKind, NotificationEvent, TelemetrySample, Vin};
use crate::time::Timestamp;

pub use file::{FileSeriesStore, FileStaticStore};
pub use index::SeriesIndex;
pub use memory::{MemorySeriesStore, MemoryStaticStore};
pub use records::StaticRecordSet;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt record at {location}: {detail}")]
    Corrupt { location: String, detail: String },
    #[error("referential integrity: {0}")]
    Integrity(String),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Why one sample of a batch was not written.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum SampleRejection {
    #[error("a point with the same vin, kind, timestamp and source already exists")]
    DuplicatePoint,
    #[error("odometer {km} km breaks monotonicity (neighbour {neighbour_km} km)")]
    OdometerRegression { km: f64, neighbour_km: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AppendReport {
    pub written: usize,
    /// `(index in batch, reason)` for every sample not written.
    pub rejected: Vec<(usize, SampleRejection)>,
}

impl AppendReport {
    pub fn duplicates(&self) -> usize {
        self.rejected
            .iter()
            .filter(|(_, r)| matches!(r, SampleRejection::DuplicatePoint))
            .count()
    }
}

/// Half-open time range `[from, to)`; open ends are unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
}

impl TimeRange {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn between(from: Timestamp, to: Timestamp) -> Self {
        Self { from: Some(from), to: Some(to) }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.from.is_none_or(|f| t >= f) && self.to.is_none_or(|e| t < e)
    }
}

/// One line of the series journal and of per-VIN exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesEntry {
    Sample(TelemetrySample),
    Event(NotificationEvent),
}

impl SeriesEntry {
    pub fn vin(&self) -> &Vin {
        match self {
            SeriesEntry::Sample(s) => &s.vin,
            SeriesEntry::Event(e) => &e.vin,
        }
    }

    pub fn timestamp(&self) -> Timestamp {
        match self {
            SeriesEntry::Sample(s) => s.observed_at,
            SeriesEntry::Event(e) => e.emitted_at,
        }
    }
}

/// Append-only time-series store.
pub trait SeriesStore: Send {
    /// Read view over committed data.
    fn index(&self) -> &SeriesIndex;

    /// Writes every acceptable sample; exact duplicates and odometer
    /// regressions are reported per sample and skipped.
    fn append_samples(&mut self, samples: &[TelemetrySample]) -> Result<AppendReport, StorageError>;

    /// Returns `false` when an event with the same delivery id is already stored.
    fn append_event(&mut self, event: &NotificationEvent) -> Result<bool, StorageError>;

    fn query_series(
        &self,
        vin: &Vin,
        kind: DataPointKind,
        range: TimeRange,
        downsample: Option<Duration>,
    ) -> Vec<TelemetrySample> {
        self.index().query_series(vin, kind, range, downsample)
    }

    fn last_known(&self, vin: &Vin, kinds: &[DataPointKind]) -> BTreeMap<DataPointKind, TelemetrySample> {
        self.index().last_known(vin, kinds)
    }

    fn events(&self, vin: &Vin, range: TimeRange) -> Vec<NotificationEvent> {
        self.index().events(vin, range)
    }

    /// Writes every entry of `vin` as JSON-lines in chronological order.
    fn export_vin(&self, vin: &Vin, out: &mut dyn Write) -> Result<usize, StorageError> {
        let mut n = 0;
        for entry in self.index().entries(vin) {
            serde_json::to_writer(&mut *out, &entry)?;
            out.write_all(b"\n")?;
            n += 1;
        }
        Ok(n)
    }

    /// Writes every VIN's entries, VINs in sorted order.
    fn export_all(&self, out: &mut dyn Write) -> Result<usize, StorageError> {
        let mut n = 0;
        for vin in self.index().vins() {
            n += self.export_vin(&vin, out)?;
        }
        Ok(n)
    }

    /// Re-appends a JSON-lines dump. Returns `(written, skipped)`.
    fn import(&mut self, input: &mut dyn BufRead) -> Result<(usize, usize), StorageError> {
        let mut written = 0;
        let mut skipped = 0;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: SeriesEntry = serde_json::from_str(&line).map_err(|e| StorageError::Corrupt {
                location: format!("line {}", lineno + 1),
                detail: e.to_string(),
            })?;
            match entry {
                SeriesEntry::Sample(s) => {
                    let r = self.append_samples(std::slice::from_ref(&s))?;
                    written += r.written;
                    skipped += r.rejected.len();
                }
                SeriesEntry::Event(e) => {
                    if self.append_event(&e)? {
                        written += 1;
                    } else {
                        skipped += 1;
                    }
                }
            }
        }
        Ok((written, skipped))
    }
}

/// Static store; mutations go through `commit`, which applies all changes or none.
pub trait StaticStore: Send {
    fn records(&self) -> &StaticRecordSet;

    fn commit(
        &mut self,
        change: &mut dyn FnMut(&mut StaticRecordSet) -> Result<(), StorageError>,
    ) -> Result<(), StorageError>;
}
