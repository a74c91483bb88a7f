//! On-disk layout of a world directory:
//!
//! ```text
//! <dir>/world.json    simulator, collector and clock snapshot
//! <dir>/static.json   static records
//! <dir>/series/       series journal segments
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{World, WorldConfig, WorldError, WorldState};
use crate::domain::ProfileRegistry;
use crate::storage::{FileSeriesStore, FileStaticStore, StorageError};

pub const STATE_FILE: &str = "world.json";
pub const STATIC_FILE: &str = "static.json";
pub const SERIES_DIR: &str = "series";

pub fn state_path(dir: &Path) -> PathBuf {
    dir.join(STATE_FILE)
}

pub fn exists(dir: &Path) -> bool {
    state_path(dir).exists()
}

fn stores(dir: &Path) -> Result<(FileStaticStore, FileSeriesStore), StorageError> {
    Ok((FileStaticStore::open(dir.join(STATIC_FILE))?, FileSeriesStore::open(dir.join(SERIES_DIR))?))
}

impl World {
    /// Creates a fresh world in `dir`, which must not hold one already.
    pub fn create_in(dir: &Path, config: WorldConfig, registry: ProfileRegistry) -> Result<Self, WorldError> {
        if exists(dir) {
            return Err(WorldError::Config(format!("{} already holds a simulation", dir.display())));
        }
        fs::create_dir_all(dir).map_err(StorageError::from)?;
        let (statics, series) = stores(dir)?;
        let world = Self::new(config, registry, Box::new(statics), Box::new(series))?;
        world.save_to(dir)?;
        Ok(world)
    }

    /// Reopens the world saved in `dir`.
    pub fn open_in(dir: &Path, registry: ProfileRegistry) -> Result<Self, WorldError> {
        let path = state_path(dir);
        let raw = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                WorldError::Config(format!("no simulation in {}; run `sim start` first", dir.display()))
            }
            _ => WorldError::Storage(e.into()),
        })?;
        let state: WorldState = serde_json::from_str(&raw).map_err(|e| {
            WorldError::Storage(StorageError::Corrupt { location: path.display().to_string(), detail: e.to_string() })
        })?;
        let (statics, series) = stores(dir)?;
        Ok(Self::resume(state, registry, Box::new(statics), Box::new(series)))
    }

    /// Writes the snapshot next to the stores; the stores persist on every commit.
    pub fn save_to(&self, dir: &Path) -> Result<(), WorldError> {
        let path = state_path(dir);
        let tmp = path.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp).map_err(StorageError::from)?;
        serde_json::to_writer(&mut f, &self.snapshot()).map_err(StorageError::from)?;
        f.write_all(b"\n").map_err(StorageError::from)?;
        f.sync_all().map_err(StorageError::from)?;
        fs::rename(&tmp, &path).map_err(StorageError::from)?;
        Ok(())
    }
}
