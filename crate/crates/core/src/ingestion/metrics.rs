use std::fmt::Write;

use serde::{Deserialize, Serialize};

macro_rules! counters {
    ($($name:ident),+ $(,)?) => {
        /// Monotone collection counters.
        #[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
        pub struct Metrics {
            $(pub $name: u64,)+
        }

        impl Metrics {
            pub fn pairs(&self) -> Vec<(&'static str, u64)> {
                vec![$((stringify!($name), self.$name)),+]
            }
        }
    };
}

counters!(
    webhooks_received,
    webhooks_rejected,
    webhooks_duplicate,
    webhooks_quarantined,
    webhooks_skipped,
    events_stored,
    requests_enqueued,
    requests_executed,
    requests_skipped_consent,
    requests_failed,
    quota_deferred,
    upstream_calls,
    upstream_errors,
    upstream_quota_exceeded,
    token_refreshes,
    samples_stored,
    samples_rejected,
    slots_fired,
    slots_succeeded,
    slots_failed,
    slots_missed,
    consents_expired,
    consents_revoked,
);

impl Metrics {
    /// `name value` per line, in declaration order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, value) in self.pairs() {
            let _ = writeln!(out, "{name} {value}");
        }
        out
    }
}
