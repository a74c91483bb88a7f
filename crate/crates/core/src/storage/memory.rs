use super::{AppendReport, SeriesIndex, SeriesStore, StaticRecordSet, StaticStore, StorageError};
use crate::domain::{NotificationEvent, TelemetrySample};

#[derive(Debug, Default)]
pub struct MemorySeriesStore {
    index: SeriesIndex,
}

impl MemorySeriesStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl SeriesStore for MemorySeriesStore {
    fn index(&self) -> &SeriesIndex {
        &self.index
    }

    fn append_samples(&mut self, samples: &[TelemetrySample]) -> Result<AppendReport, StorageError> {
        let mut report = AppendReport::default();
        for (i, s) in samples.iter().enumerate() {
            match self.index.check(s) {
                Ok(()) => {
                    self.index.insert_checked(s);
                    report.written += 1;
                }
                Err(why) => report.rejected.push((i, why)),
            }
        }
        Ok(report)
    }

    fn append_event(&mut self, event: &NotificationEvent) -> Result<bool, StorageError> {
        Ok(self.index.insert_event(event))
    }
}

#[derive(Debug, Default)]
pub struct MemoryStaticStore {
    records: StaticRecordSet,
}

impl MemoryStaticStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StaticStore for MemoryStaticStore {
    fn records(&self) -> &StaticRecordSet {
        &self.records
    }

    fn commit(
        &mut self,
        change: &mut dyn FnMut(&mut StaticRecordSet) -> Result<(), StorageError>,
    ) -> Result<(), StorageError> {
        let mut next = self.records.clone();
        change(&mut next)?;
        self.records = next;
        Ok(())
    }
}
