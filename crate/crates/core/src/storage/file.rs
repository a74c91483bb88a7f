use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{
    AppendReport, SeriesEntry, SeriesIndex, SeriesStore, StaticRecordSet, StaticStore, StorageError,
};
use crate::domain::{NotificationEvent, TelemetrySample};

const SEGMENT_PREFIX: &str = "segment-";
const SEGMENT_SUFFIX: &str = ".jsonl";
const DEFAULT_SEGMENT_LINES: usize = 50_000;

/// Series store persisted as JSON-lines write-ahead segments.
///
/// Every accepted entry is appended as one line before the call returns. On
/// open the segments are replayed in order; a torn final line left by an
/// interrupted batch is truncated away, so the store always holds a prefix of
/// the last batch.
#[derive(Debug)]
pub struct FileSeriesStore {
    dir: PathBuf,
    index: SeriesIndex,
    active: PathBuf,
    active_lines: usize,
    segment_lines: usize,
}

fn segment_path(dir: &Path, n: u32) -> PathBuf {
    dir.join(format!("{SEGMENT_PREFIX}{n:06}{SEGMENT_SUFFIX}"))
}

fn segment_number(path: &Path) -> Option<u32> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix(SEGMENT_PREFIX)?.strip_suffix(SEGMENT_SUFFIX)?.parse().ok()
}

fn list_segments(dir: &Path) -> Result<Vec<(u32, PathBuf)>, StorageError> {
    let mut segs: Vec<(u32, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| segment_number(&p).map(|n| (n, p)))
        .collect();
    segs.sort();
    Ok(segs)
}

impl FileSeriesStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StorageError> {
        Self::open_with_segment_lines(dir, DEFAULT_SEGMENT_LINES)
    }

    pub fn open_with_segment_lines(dir: impl AsRef<Path>, segment_lines: usize) -> Result<Self, StorageError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = Self {
            active: segment_path(&dir, 1),
            dir,
            index: SeriesIndex::new(),
            active_lines: 0,
            segment_lines: segment_lines.max(1),
        };
        store.reload()?;
        Ok(store)
    }

    fn reload(&mut self) -> Result<(), StorageError> {
        self.index = SeriesIndex::new();
        let segments = list_segments(&self.dir)?;
        let last = segments.len().saturating_sub(1);
        for (i, (_, path)) in segments.iter().enumerate() {
            let lines = self.replay_segment(path, i == last)?;
            if i == last {
                self.active = path.clone();
                self.active_lines = lines;
            }
        }
        if segments.is_empty() {
            self.active = segment_path(&self.dir, 1);
            self.active_lines = 0;
        }
        Ok(())
    }

    /// Replays one segment; returns its line count. Only the final segment may
    /// end in a torn line, which is truncated.
    fn replay_segment(&mut self, path: &Path, is_last: bool) -> Result<usize, StorageError> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut good_len: u64 = 0;
        let mut lines = 0;
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf)?;
            if n == 0 {
                break;
            }
            let complete = buf.ends_with('\n');
            let parsed = if complete {
                serde_json::from_str::<SeriesEntry>(buf.trim_end()).ok()
            } else {
                None
            };
            match parsed {
                Some(entry) => {
                    self.index.apply(&entry);
                    good_len += n as u64;
                    lines += 1;
                }
                None => {
                    let at_end = reader.fill_buf()?.is_empty();
                    if is_last && at_end {
                        tracing::warn!(segment = %path.display(), offset = good_len, "truncating torn tail");
                        let f = OpenOptions::new().write(true).open(path)?;
                        f.set_len(good_len)?;
                        f.sync_all()?;
                        break;
                    }
                    return Err(StorageError::Corrupt {
                        location: format!("{} line {}", path.display(), lines + 1),
                        detail: "unparseable series entry".into(),
                    });
                }
            }
        }
        Ok(lines)
    }

    fn write_lines(&mut self, lines: &[String]) -> Result<(), StorageError> {
        if lines.is_empty() {
            return Ok(());
        }
        if self.active_lines >= self.segment_lines {
            let next = segment_number(&self.active).unwrap_or(0) + 1;
            self.active = segment_path(&self.dir, next);
            self.active_lines = 0;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.active)?;
        let mut buf = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
        for l in lines {
            buf.push_str(l);
            buf.push('\n');
        }
        f.write_all(buf.as_bytes())?;
        f.flush()?;
        self.active_lines += lines.len();
        Ok(())
    }

    /// Rewrites all segments into one chronologically sorted segment.
    pub fn compact(&mut self) -> Result<(), StorageError> {
        let old = list_segments(&self.dir)?;
        let next = old.last().map(|(n, _)| n + 1).unwrap_or(1);
        let target = segment_path(&self.dir, next);
        let tmp = target.with_extension("jsonl.tmp");
        {
            let mut f = File::create(&tmp)?;
            let mut count = 0;
            for entry in self.index.all_entries() {
                serde_json::to_writer(&mut f, &entry)?;
                f.write_all(b"\n")?;
                count += 1;
            }
            f.sync_all()?;
            self.active_lines = count;
        }
        fs::rename(&tmp, &target)?;
        for (_, p) in old {
            fs::remove_file(p)?;
        }
        self.active = target;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn segment_count(&self) -> Result<usize, StorageError> {
        Ok(list_segments(&self.dir)?.len())
    }
}

impl SeriesStore for FileSeriesStore {
    fn index(&self) -> &SeriesIndex {
        &self.index
    }

    fn append_samples(&mut self, samples: &[TelemetrySample]) -> Result<AppendReport, StorageError> {
        let mut report = AppendReport::default();
        let mut lines = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            match self.index.check(s) {
                Ok(()) => {
                    self.index.insert_checked(s);
                    lines.push(serde_json::to_string(&SeriesEntry::Sample(s.clone()))?);
                    report.written += 1;
                }
                Err(why) => report.rejected.push((i, why)),
            }
        }
        if let Err(e) = self.write_lines(&lines) {
            self.reload()?;
            return Err(e);
        }
        Ok(report)
    }

    fn append_event(&mut self, event: &NotificationEvent) -> Result<bool, StorageError> {
        if self.index.has_event(&event.delivery_id) {
            return Ok(false);
        }
        let line = serde_json::to_string(&SeriesEntry::Event(event.clone()))?;
        self.write_lines(std::slice::from_ref(&line))?;
        Ok(self.index.insert_event(event))
    }
}

/// Static store persisted as one JSON document, replaced atomically on commit.
#[derive(Debug)]
pub struct FileStaticStore {
    path: PathBuf,
    records: StaticRecordSet,
}

impl FileStaticStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StorageError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() {
            let raw = fs::read_to_string(&path)?;
            serde_json::from_str(&raw).map_err(|e| StorageError::Corrupt {
                location: path.display().to_string(),
                detail: e.to_string(),
            })?
        } else {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            StaticRecordSet::default()
        };
        Ok(Self { path, records })
    }

    fn persist(&self, records: &StaticRecordSet) -> Result<(), StorageError> {
        let tmp = self.path.with_extension("json.tmp");
        let mut f = File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, records)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        fs::rename(&tmp, &self.path)?;
        Ok(())
    }
}

impl StaticStore for FileStaticStore {
    fn records(&self) -> &StaticRecordSet {
        &self.records
    }

    fn commit(
        &mut self,
        change: &mut dyn FnMut(&mut StaticRecordSet) -> Result<(), StorageError>,
    ) -> Result<(), StorageError> {
        let mut next = self.records.clone();
        change(&mut next)?;
        self.persist(&next)?;
        self.records = next;
        Ok(())
    }
}
