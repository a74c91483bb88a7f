//! Signed webhook delivery with at-least-once semantics.

use std::collections::BTreeMap;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::domain::{BrandId, NotificationEvent};
use crate::signing;
use crate::time::{self, Timestamp};

pub const DELIVERY_ID_HEADER: &str = "delivery_id";
pub const SIGNATURE_HEADER: &str = "signature";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_secs: i64,
    pub multiplier: i64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, initial_backoff_secs: 30, multiplier: 2 }
    }
}

impl RetryPolicy {
    /// Delay before the attempt following attempt number `made` (1-based).
    pub fn backoff_after(&self, made: u32) -> Duration {
        let factor = self.multiplier.saturating_pow(made.saturating_sub(1));
        Duration::seconds(self.initial_backoff_secs.saturating_mul(factor))
    }
}

/// One signed POST, identical across retries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebhookDelivery {
    pub brand: BrandId,
    pub delivery_id: String,
    pub body: String,
    pub signature: String,
}

impl WebhookDelivery {
    pub fn sign(brand: &BrandId, event: &NotificationEvent, secret: &[u8]) -> Self {
        let body = serde_json::to_string(event).expect("notification events always serialize");
        Self {
            brand: brand.clone(),
            delivery_id: event.delivery_id.clone(),
            signature: signing::webhook_signature(secret, body.as_bytes()),
            body,
        }
    }

    pub fn headers(&self) -> [(&'static str, &str); 2] {
        [(DELIVERY_ID_HEADER, &self.delivery_id), (SIGNATURE_HEADER, &self.signature)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "status", rename_all = "snake_case")]
pub enum SinkResponse {
    Status(u16),
    Unreachable,
}

impl SinkResponse {
    pub fn is_success(self) -> bool {
        matches!(self, SinkResponse::Status(s) if (200..300).contains(&s))
    }
}

/// Receiving end of webhook deliveries.
pub trait WebhookSink {
    fn deliver(&mut self, delivery: &WebhookDelivery, now: Timestamp) -> SinkResponse;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub delivery_id: String,
    pub attempt: u32,
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
    pub response: SinkResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub delivery: WebhookDelivery,
    pub attempts: u32,
    pub last_response: SinkResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Pending {
    delivery: WebhookDelivery,
    attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WebhookDispatcher {
    policy: RetryPolicy,
    #[serde(with = "pending_queue")]
    queue: BTreeMap<(Timestamp, u64), Pending>,
    next_seq: u64,
    attempts: Vec<AttemptRecord>,
    dead_letters: Vec<DeadLetter>,
    delivered: u64,
}

mod pending_queue {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        #[serde(with = "time::rfc3339")]
        due: Timestamp,
        seq: u64,
        pending: Pending,
    }

    pub fn serialize<S: Serializer>(q: &BTreeMap<(Timestamp, u64), Pending>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(q.iter().map(|((due, seq), p)| Entry { due: *due, seq: *seq, pending: p.clone() }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(Timestamp, u64), Pending>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| ((e.due, e.seq), e.pending)).collect())
    }
}

impl WebhookDispatcher {
    pub fn new(policy: RetryPolicy) -> Self {
        Self { policy, ..Self::default() }
    }

    pub fn enqueue(&mut self, delivery: WebhookDelivery, now: Timestamp) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert((now, seq), Pending { delivery, attempts: 0 });
    }

    pub fn next_due(&self) -> Option<Timestamp> {
        self.queue.keys().next().map(|(t, _)| *t)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Attempts every delivery due at or before `now`. Returns successful deliveries.
    pub fn pump(&mut self, now: Timestamp, sink: &mut dyn WebhookSink) -> u64 {
        let mut ok = 0;
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let (_, mut p) = entry.remove_entry();
            p.attempts += 1;
            let response = sink.deliver(&p.delivery, now);
            self.attempts.push(AttemptRecord {
                delivery_id: p.delivery.delivery_id.clone(),
                attempt: p.attempts,
                at: now,
                response,
            });
            if response.is_success() {
                ok += 1;
                self.delivered += 1;
            } else if p.attempts >= self.policy.max_attempts {
                self.dead_letters.push(DeadLetter { delivery: p.delivery, attempts: p.attempts, last_response: response });
            } else {
                let due = now + self.policy.backoff_after(p.attempts);
                let seq = self.next_seq;
                self.next_seq += 1;
                self.queue.insert((due, seq), p);
            }
        }
        ok
    }

    pub fn attempts(&self) -> &[AttemptRecord] {
        &self.attempts
    }

    pub fn dead_letters(&self) -> &[DeadLetter] {
        &self.dead_letters
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{NotificationKind, Vin};
    use chrono::{TimeZone, Utc};

    struct Flaky {
        fail_first: u32,
        seen: Vec<(String, Timestamp)>,
    }

    impl WebhookSink for Flaky {
        fn deliver(&mut self, d: &WebhookDelivery, now: Timestamp) -> SinkResponse {
            self.seen.push((d.delivery_id.clone(), now));
            if self.seen.len() as u32 <= self.fail_first {
                SinkResponse::Unreachable
            } else {
                SinkResponse::Status(200)
            }
        }
    }

    fn delivery() -> WebhookDelivery {
        let ev = NotificationEvent {
            vin: Vin::parse("WBA11AAAL00000104").unwrap(),
            kind: NotificationKind::AccidentReported,
            emitted_at: t0(),
            delivery_id: "dlv_1".into(),
        };
        WebhookDelivery::sign(&BrandId::new("bmw"), &ev, b"secret")
    }

    fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2022, 2, 1, 8, 0, 0).unwrap()
    }

    fn run(sink: &mut Flaky, d: &mut WebhookDispatcher, until_secs: i64) {
        while let Some(due) = d.next_due() {
            if due > t0() + Duration::seconds(until_secs) {
                break;
            }
            d.pump(due, sink);
        }
    }

    #[test]
    fn backoff_schedule_doubles_from_thirty_seconds() {
        let p = RetryPolicy::default();
        let delays: Vec<i64> = (1..=4).map(|n| p.backoff_after(n).num_seconds()).collect();
        assert_eq!(delays, vec![30, 60, 120, 240]);
    }

    #[test]
    fn delivered_once_reachable() {
        let mut d = WebhookDispatcher::new(RetryPolicy::default());
        d.enqueue(delivery(), t0());
        let mut sink = Flaky { fail_first: 2, seen: vec![] };
        run(&mut sink, &mut d, 3600);
        let offsets: Vec<i64> = sink.seen.iter().map(|(_, at)| (*at - t0()).num_seconds()).collect();
        // Retry-schedule oracle: t0, t0+30, t0+30+60.
        assert_eq!(offsets, vec![0, 30, 90]);
        assert!(sink.seen.iter().all(|(id, _)| id == "dlv_1"));
        assert_eq!(d.delivered(), 1);
        assert!(d.dead_letters().is_empty());
    }

    #[test]
    fn dead_letter_after_five_attempts() {
        let mut d = WebhookDispatcher::new(RetryPolicy::default());
        d.enqueue(delivery(), t0());
        let mut sink = Flaky { fail_first: u32::MAX, seen: vec![] };
        run(&mut sink, &mut d, 86_400);
        assert_eq!(sink.seen.len(), 5);
        assert_eq!((sink.seen[4].1 - t0()).num_seconds(), 30 + 60 + 120 + 240);
        assert_eq!(d.dead_letters().len(), 1);
        assert_eq!(d.pending(), 0);
    }

    #[test]
    fn signature_covers_body() {
        let d = delivery();
        assert!(signing::verify_webhook_signature(b"secret", d.body.as_bytes(), &d.signature));
        assert!(!signing::verify_webhook_signature(b"other", d.body.as_bytes(), &d.signature));
    }
}
