//! HTTP surface of the platform (consents, vehicles, series, reports,
//! webhooks, metrics) and of the simulated aggregator (OAuth, data API,
//! simulation control), served from one shared [`World`].

mod error;
mod oem;
mod platform;

use std::sync::{Arc, Mutex, MutexGuard};

use axum::Router;
use chrono::{DateTime, Utc};
use ubi_core::time;
use ubi_core::world::World;

pub use error::ApiError;

/// Shared server state. Handlers lock the world for the duration of one request.
#[derive(Clone)]
pub struct AppState {
    world: Arc<Mutex<World>>,
}

impl AppState {
    pub fn new(world: World) -> Self {
        Self { world: Arc::new(Mutex::new(world)) }
    }

    pub fn lock(&self) -> MutexGuard<'_, World> {
        // A panicking handler leaves the world as it was at its last commit.
        self.world.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Platform and simulator routes on one router.
pub fn router(state: AppState) -> Router {
    platform::routes().merge(oem::routes()).with_state(state)
}

pub(crate) fn parse_time(raw: Option<&str>, field: &str) -> Result<Option<DateTime<Utc>>, ApiError> {
    raw.map(|r| time::parse_rfc3339(r).map_err(|e| ApiError::bad_request(format!("{field}: {e}")))).transpose()
}
