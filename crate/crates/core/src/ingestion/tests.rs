use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use super::*;
use crate::consent::ConsentState;
use crate::domain::{BrandId, DataPointKind, NotificationEvent, NotificationKind, Vin};
use crate::signing;
use crate::simulator::derived_webhook_secret;
use crate::storage::TimeRange;
use crate::time::Timestamp;
use crate::world::World;

fn epoch() -> Timestamp {
    Utc.with_ymd_and_hms(2023, 1, 9, 0, 0, 0).unwrap()
}

fn active(preset: &str) -> (World, Vin) {
    let mut world = World::in_memory(11, epoch(), &[preset]).unwrap();
    let vin = world.enroll_preset(preset).unwrap();
    world.activate(&vin, "driver@example.lu").unwrap();
    (world, vin)
}

fn event(vin: &Vin, kind: NotificationKind, at: Timestamp, id: &str) -> NotificationEvent {
    NotificationEvent { vin: vin.clone(), kind, emitted_at: at, delivery_id: id.to_string() }
}

fn signed(brand: &str, ev: &NotificationEvent) -> (WebhookHeaders, Vec<u8>) {
    let body = serde_json::to_vec(ev).unwrap();
    let sig = signing::webhook_signature(derived_webhook_secret(&BrandId::new(brand)).as_bytes(), &body);
    (WebhookHeaders { delivery_id: Some(ev.delivery_id.clone()), signature: Some(sig) }, body)
}

fn kinds(k: &[DataPointKind]) -> BTreeSet<DataPointKind> {
    k.iter().copied().collect()
}

#[test]
fn headers_match_loosely() {
    let h = WebhookHeaders::from_pairs([("Delivery-Id", " dlv_1 "), ("SIGNATURE", "sha256=ab"), ("other", "x")]);
    assert_eq!(h.delivery_id.as_deref(), Some("dlv_1"));
    assert_eq!(h.signature.as_deref(), Some("sha256=ab"));
}

#[test]
fn location_change_triggers_a_request_but_is_not_stored() {
    let (mut world, vin) = active("bmw-x5");
    let calls = world.sim().data_calls().len();
    let ev = event(&vin, NotificationKind::LocationChange, world.now(), "dlv_loc1");
    let (h, body) = signed("bmw", &ev);
    let rec = world.receive_webhook("bmw", &h, &body).unwrap();
    assert_eq!(rec.disposition, Disposition::TriggeredRequest);
    assert_eq!(rec.http_status(), 200);
    assert_eq!(world.sim().data_calls().len(), calls + 1);
    assert!(world.series().events(&vin, TimeRange::all()).iter().all(|e| e.delivery_id != "dlv_loc1"));
}

#[test]
fn incident_is_stored_once_despite_redelivery() {
    let (mut world, vin) = active("bmw-x5");
    let ev = event(&vin, NotificationKind::AccidentReported, world.now(), "dlv_acc1");
    let (h, body) = signed("bmw", &ev);
    assert_eq!(world.receive_webhook("bmw", &h, &body).unwrap().disposition, Disposition::Stored);
    assert_eq!(world.receive_webhook("bmw", &h, &body).unwrap().disposition, Disposition::IgnoredDuplicate);
    let stored = world.series().events(&vin, TimeRange::all());
    assert_eq!(stored.iter().filter(|e| e.delivery_id == "dlv_acc1").count(), 1);
    assert_eq!(world.collector().metrics().webhooks_duplicate, 1);
}

#[test]
fn bad_signature_is_rejected_with_401() {
    let (mut world, vin) = active("bmw-x5");
    let ev = event(&vin, NotificationKind::AccidentReported, world.now(), "dlv_bad");
    let (mut h, body) = signed("bmw", &ev);
    h.signature = Some(signing::webhook_signature(b"wrong", &body));
    let rec = world.receive_webhook("bmw", &h, &body).unwrap();
    assert_eq!(rec.disposition, Disposition::RejectedBadSignature);
    assert_eq!(rec.http_status(), 401);
    assert!(world.series().events(&vin, TimeRange::all()).is_empty());
    // The genuine delivery with the same id still goes through.
    let (h, body) = signed("bmw", &ev);
    assert_eq!(world.receive_webhook("bmw", &h, &body).unwrap().disposition, Disposition::Stored);
}

#[test]
fn malformed_and_headerless_deliveries_are_errors() {
    let (mut world, vin) = active("bmw-x5");
    let ev = event(&vin, NotificationKind::AccidentReported, world.now(), "dlv_x");
    let (h, body) = signed("bmw", &ev);
    let no_sig = WebhookHeaders { delivery_id: h.delivery_id.clone(), signature: None };
    assert!(matches!(
        world.receive_webhook("bmw", &no_sig, &body),
        Err(crate::world::WorldError::Ingest(IngestError::MissingHeader(_)))
    ));
    assert!(matches!(
        world.receive_webhook("tesla", &h, &body),
        Err(crate::world::WorldError::Ingest(IngestError::UnknownBrand(_)))
    ));
    let junk = b"not json";
    let sig = signing::webhook_signature(derived_webhook_secret(&BrandId::new("bmw")).as_bytes(), junk);
    let h2 = WebhookHeaders { delivery_id: Some("dlv_y".into()), signature: Some(sig) };
    assert!(matches!(
        world.receive_webhook("bmw", &h2, junk),
        Err(crate::world::WorldError::Ingest(IngestError::Malformed(_)))
    ));
}

#[test]
fn unknown_vehicle_is_quarantined() {
    let (mut world, _) = active("bmw-x5");
    let stranger = Vin::parse("WBA00000000000999").unwrap();
    let ev = event(&stranger, NotificationKind::AccidentReported, world.now(), "dlv_q");
    let (h, body) = signed("bmw", &ev);
    let rec = world.receive_webhook("bmw", &h, &body).unwrap();
    assert_eq!(rec.disposition, Disposition::Quarantined);
    assert_eq!(rec.http_status(), 202);
    assert_eq!(world.collector().quarantine().len(), 1);
    assert!(world.series().index().vins().is_empty() || !world.series().index().vins().contains(&stranger));
}

#[test]
fn events_without_consent_are_skipped() {
    let mut world = World::in_memory(11, epoch(), &["bmw-x5"]).unwrap();
    let vin = world.enroll_preset("bmw-x5").unwrap();
    let ev = event(&vin, NotificationKind::AccidentReported, world.now(), "dlv_nc");
    let (h, body) = signed("bmw", &ev);
    assert_eq!(world.receive_webhook("bmw", &h, &body).unwrap().disposition, Disposition::SkippedNoConsent);
    assert!(world.series().events(&vin, TimeRange::all()).is_empty());
}

#[test]
fn revoke_webhook_revokes_locally() {
    let (mut world, vin) = active("bmw-x5");
    let ev = event(&vin, NotificationKind::RevokeOfConsent, world.now(), "dlv_rev");
    let (h, body) = signed("bmw", &ev);
    world.receive_webhook("bmw", &h, &body).unwrap();
    assert_eq!(world.consent(&vin).unwrap().state, ConsentState::Revoked);
    assert!(world.collector().vault().get(&vin).is_none());
    assert!(matches!(
        world.execute_request(&vin, &kinds(&[DataPointKind::Odometer])),
        Err(crate::world::WorldError::Request(RequestError::ConsentInactive(_)))
    ));
}

#[test]
fn journal_replay_changes_nothing() {
    let (mut world, _) = active("bmw-x5");
    world.advance(Duration::days(3)).unwrap();
    assert!(!world.collector().journal().is_empty());
    let mut before = Vec::new();
    world.series().export_all(&mut before).unwrap();
    let calls = world.sim().data_calls().len();
    let records = world.replay_journal().unwrap();
    assert!(records.iter().all(|r| r.disposition == Disposition::IgnoredDuplicate));
    let mut after = Vec::new();
    world.series().export_all(&mut after).unwrap();
    assert_eq!(before, after);
    assert_eq!(world.sim().data_calls().len(), calls);
}

#[test]
fn sixty_requests_in_a_minute_defer_ten() {
    let (mut world, vin) = active("bmw-x5");
    let start = world.now();
    let k = kinds(&[DataPointKind::Odometer]);
    let mut executed = 0;
    let mut deferred = 0;
    for i in 0..60 {
        world.advance_to(start + Duration::milliseconds(i * 500)).unwrap();
        match world.execute_request(&vin, &k) {
            Ok(_) => executed += 1,
            Err(crate::world::WorldError::Request(RequestError::QuotaDeferred { until })) => {
                assert!(until > world.now());
                deferred += 1;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert_eq!((executed, deferred), (50, 10));
    assert_eq!(world.collector().metrics().upstream_quota_exceeded, 0);
}

#[test]
fn queued_burst_drains_after_the_window() {
    let (mut world, vin) = active("bmw-x5");
    let k = kinds(&[DataPointKind::Odometer]);
    let before = world.collector().metrics().requests_executed;
    for _ in 0..60 {
        world.request_now(&vin, k.clone()).unwrap();
    }
    assert_eq!(world.collector().pending(&vin), 10);
    assert_eq!(world.collector().metrics().requests_executed, before + 50);
    world.advance(Duration::seconds(62)).unwrap();
    assert_eq!(world.collector().pending(&vin), 0);
    assert!(world.collector().metrics().requests_executed >= before + 60);
    assert_eq!(world.collector().metrics().upstream_quota_exceeded, 0);
}

#[test]
fn upstream_outage_is_retried_with_backoff() {
    let (mut world, vin) = active("mercedes-gle");
    // The shipped plan takes the API down from day 5.
    world.advance_to(epoch() + Duration::days(6)).unwrap();
    let m = world.collector().metrics();
    assert!(m.upstream_errors >= 4, "{}", m.render());
    let failed_slots = world.collector().slots().iter().filter(|s| s.outcome == SlotOutcome::Failed).count();
    assert!(failed_slots >= 1);
    assert!(world.series().query_series(&vin, DataPointKind::Odometer, TimeRange::between(epoch() + Duration::days(5), world.now()), None).is_empty());
}

#[test]
fn metrics_render_one_line_per_counter() {
    let m = Metrics::default();
    let text = m.render();
    assert_eq!(text.lines().count(), m.pairs().len());
    assert!(text.lines().all(|l| l.ends_with(" 0")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Random mixes of time jumps, manual requests, OEM revokes, driver
    /// revokes and re-enrolments never store a request sample outside an
    /// active consent interval.
    #[test]
    fn consent_gate_holds(ops in proptest::collection::vec((0u8..5, 1i64..(36 * 3600)), 1..25)) {
        let (mut world, vin) = active("bmw-x5");
        let k = kinds(&[DataPointKind::Odometer, DataPointKind::GpsCoordinates]);
        for (op, secs) in ops {
            // Intervals are half-open at millisecond resolution, so no two ops share an instant.
            world.advance(Duration::milliseconds(1)).unwrap();
            match op {
                0 => world.advance(Duration::seconds(secs)).unwrap(),
                1 => { let _ = world.execute_request(&vin, &k); }
                2 => { let now = world.now(); let _ = world.sim_mut().revoke_at_oem(&vin, now); }
                3 => { let _ = world.revoke(&vin); }
                _ => {
                    if world.consent(&vin).is_some_and(|c| c.state == ConsentState::Revoked) {
                        world.activate(&vin, "driver@example.lu").unwrap();
                    }
                }
            }
            prop_assert!(consent_gate_violations(world.statics().records(), world.series()).is_empty());
        }
    }
}
