//! Request quota ledgers shared by the OEM simulator (authoritative) and the
//! platform's local mirror.

use std::collections::VecDeque;

use chrono::{Days, Duration, NaiveTime};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::domain::{QuotaWindow, RequestQuota};
use crate::time::{self, Timestamp};

/// Grants recorded against one vehicle's quota.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaLedger {
    quota: RequestQuota,
    tz: Tz,
    /// Extra width added to sliding windows.
    margin_ms: i64,
    grants: VecDeque<Timestamp>,
}

impl QuotaLedger {
    pub fn new(quota: RequestQuota, tz: Tz) -> Self {
        Self { quota, tz, margin_ms: 0, grants: VecDeque::new() }
    }

    /// A ledger whose sliding window is widened by `margin`, so it never
    /// grants a request the exact-width ledger would refuse.
    pub fn with_margin(mut self, margin: Duration) -> Self {
        self.margin_ms = margin.num_milliseconds().max(0);
        self
    }

    pub fn quota(&self) -> RequestQuota {
        self.quota
    }

    fn window_ms(&self) -> i64 {
        self.quota.window_secs as i64 * 1000 + self.margin_ms
    }

    fn prune(&mut self, now: Timestamp) {
        let window = self.quota.window;
        let sliding_cut = now - Duration::milliseconds(self.window_ms());
        let day_cut = day_start(self.tz, now);
        while let Some(g) = self.grants.front() {
            let expired = match window {
                QuotaWindow::Sliding => *g <= sliding_cut,
                QuotaWindow::LocalDay => *g < day_cut,
            };
            if !expired {
                break;
            }
            self.grants.pop_front();
        }
    }

    /// Grants in the window that ends at `now`.
    pub fn used(&mut self, now: Timestamp) -> u32 {
        self.prune(now);
        self.grants.iter().filter(|g| **g <= now).count() as u32
    }

    pub fn available(&mut self, now: Timestamp) -> bool {
        self.used(now) < self.quota.max_requests
    }

    /// Consumes one unit if available.
    pub fn try_acquire(&mut self, now: Timestamp) -> bool {
        if self.available(now) {
            self.grants.push_back(now);
            true
        } else {
            false
        }
    }

    /// Returns the most recent unit granted at `at`, for calls the upstream
    /// rejected before charging them.
    pub fn refund(&mut self, at: Timestamp) -> bool {
        match self.grants.iter().rposition(|g| *g == at) {
            Some(i) => {
                self.grants.remove(i);
                true
            }
            None => false,
        }
    }

    /// Earliest instant at which a unit will be available again.
    pub fn next_available(&mut self, now: Timestamp) -> Timestamp {
        if self.available(now) {
            return now;
        }
        match self.quota.window {
            QuotaWindow::Sliding => {
                let excess = self.grants.len() + 1 - self.quota.max_requests as usize;
                let oldest_to_expire = self.grants[excess - 1];
                oldest_to_expire + Duration::milliseconds(self.window_ms())
            }
            QuotaWindow::LocalDay => {
                let tomorrow = time::local_date(self.tz, now) + Days::new(1);
                time::local_to_utc(self.tz, tomorrow, NaiveTime::MIN)
            }
        }
    }
}

fn day_start(tz: Tz, now: Timestamp) -> Timestamp {
    time::local_to_utc(tz, time::local_date(tz, now), NaiveTime::MIN)
}
