use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use super::*;
use crate::eligibility::VinCheckStatus;

fn t0() -> Timestamp {
    Utc.with_ymd_and_hms(2022, 3, 1, 9, 0, 0).unwrap()
}

fn vin() -> Vin {
    Vin::parse("WBAX5AAAL00000103").unwrap()
}

fn signer() -> LinkSigner {
    LinkSigner::new(b"test-link-secret".to_vec())
}

fn eligible(status: VinCheckStatus) -> EligibilityOutcome {
    EligibilityOutcome {
        vin: vin(),
        requirement_ok: status != VinCheckStatus::NotAttempted,
        vin_check: status,
        checked_at: t0(),
        method: None,
        resolves_at: None,
    }
}

fn creds(n: u32) -> CredentialPair {
    CredentialPair {
        access: CredentialRef(format!("access-{n}")),
        refresh: CredentialRef(format!("refresh-{n}")),
    }
}

fn fresh(variant: ConsentVariant) -> ConsentRecord {
    initiate_consent(None, Some(&eligible(VinCheckStatus::Eligible)), &vin(), "driver@example.lu", variant, &signer(), t0())
        .unwrap()
}

fn open_link(rec: &mut ConsentRecord) {
    let token = rec.link.clone().unwrap().token;
    rec.accept_link(&token, &signer(), t0()).unwrap();
}

#[test]
fn initiate_happy_path_issues_link() {
    let rec = fresh(ConsentVariant::SimplePortal);
    assert_eq!(rec.state, ConsentState::EmailSent);
    let link = rec.link.as_ref().unwrap();
    assert_eq!(link.expires_at, t0() + Duration::hours(72));
    assert_eq!(rec.history.len(), 1);
}

#[test]
fn initiate_requires_eligible_vin() {
    for status in [VinCheckStatus::NotEligible, VinCheckStatus::Pending, VinCheckStatus::NotAttempted] {
        let err = initiate_consent(
            None,
            Some(&eligible(status)),
            &vin(),
            "driver@example.lu",
            ConsentVariant::SimplePortal,
            &signer(),
            t0(),
        )
        .unwrap_err();
        assert_eq!(err, ConsentError::NotEligible(vin()));
    }
    let err = initiate_consent(None, None, &vin(), "driver@example.lu", ConsentVariant::SimplePortal, &signer(), t0())
        .unwrap_err();
    assert_eq!(err, ConsentError::NotEligible(vin()));
}

#[test]
fn link_is_single_use_and_expires() {
    let mut rec = fresh(ConsentVariant::SimplePortal);
    let token = rec.link.clone().unwrap().token;
    assert!(matches!(
        rec.accept_link(&token, &signer(), t0() + Duration::hours(73)),
        Err(ConsentError::InvalidLink(LinkError::Expired))
    ));
    assert!(matches!(rec.accept_link("x.y", &signer(), t0()), Err(ConsentError::InvalidLink(_))));
    rec.accept_link(&token, &signer(), t0()).unwrap();
    assert_eq!(rec.state, ConsentState::AwaitingOemConfirmation);
    assert!(matches!(
        rec.accept_link(&token, &signer(), t0()),
        Err(ConsentError::WrongState { .. })
    ));
}

#[test]
fn simple_portal_confirmation() {
    let mut rec = fresh(ConsentVariant::SimplePortal);
    open_link(&mut rec);
    rec.confirm_on_oem_portal(true, Some(creds(1)), t0()).unwrap();
    assert_eq!(rec.state, ConsentState::Active);
    assert_eq!(rec.access_token, Some(CredentialRef("access-1".into())));
    assert_eq!(rec.granted_at, Some(t0()));

    let mut rejected = fresh(ConsentVariant::SimplePortal);
    open_link(&mut rejected);
    rejected.confirm_on_oem_portal(false, None, t0()).unwrap();
    assert_eq!(rejected.state, ConsentState::Revoked);
    assert!(rejected.access_token.is_none());
}

#[test]
fn identity_retry_policy() {
    let policy = ConsentPolicy::default();
    let mut rec = fresh(ConsentVariant::StellantisComplex);
    open_link(&mut rec);
    assert_eq!(rec.state, ConsentState::IdentityVerification);
    assert!(!rec.verify_identity(false, &policy, t0()).unwrap());
    assert!(!rec.verify_identity(false, &policy, t0()).unwrap());
    assert!(rec.verify_identity(false, &policy, t0()).unwrap(), "third failure escalates");
    assert!(rec.support_flag);
    assert_eq!(rec.state, ConsentState::IdentityVerification);
    assert!(!rec.verify_identity(false, &policy, t0()).unwrap(), "escalates once");
    rec.verify_identity(true, &policy, t0()).unwrap();
    assert_eq!(rec.state, ConsentState::PrivacySettings);
}

#[test]
fn privacy_mechanism_must_match() {
    let policy = ConsentPolicy::default();
    let mut rec = fresh(ConsentVariant::StellantisComplex);
    open_link(&mut rec);
    rec.verify_identity(true, &policy, t0()).unwrap();
    assert_eq!(
        rec.configure_privacy_settings(PrivacyMechanism::ScreenV1, PrivacyMechanism::DoublePush, t0()),
        Err(ConsentError::MechanismMismatch {
            installed: PrivacyMechanism::DoublePush,
            chosen: PrivacyMechanism::ScreenV1
        })
    );
    rec.configure_privacy_settings(PrivacyMechanism::DoublePush, PrivacyMechanism::DoublePush, t0())
        .unwrap();
    assert_eq!(rec.state, ConsentState::TransmissionTest);
}

fn to_transmission_test() -> ConsentRecord {
    let policy = ConsentPolicy::default();
    let mut rec = fresh(ConsentVariant::StellantisComplex);
    open_link(&mut rec);
    rec.verify_identity(true, &policy, t0()).unwrap();
    rec.configure_privacy_settings(PrivacyMechanism::ScreenV2, PrivacyMechanism::ScreenV2, t0()).unwrap();
    rec
}

fn run(start: Timestamp, ok: bool) -> TransmissionTestRun {
    TransmissionTestRun { started_at: start, finished_at: start + Duration::seconds(360), succeeded: ok }
}

#[test]
fn failed_transmission_test_keeps_state() {
    let mut rec = to_transmission_test();
    rec.run_transmission_test(run(t0(), false)).unwrap();
    assert_eq!(rec.state, ConsentState::TransmissionTest);
    assert!(rec.advisory.as_deref().unwrap().contains("workshop"));
    rec.run_transmission_test(run(t0() + Duration::days(1), true)).unwrap();
    assert_eq!(rec.state, ConsentState::BackgroundProcessing);
    assert_eq!(rec.transmission_test.as_ref().unwrap().elapsed(), Duration::seconds(360));
    assert!(rec.advisory.is_none());
}

#[test]
fn background_processing_needs_days_and_a_trip() {
    let policy = ConsentPolicy::default();
    let mut rec = to_transmission_test();
    rec.run_transmission_test(run(t0(), true)).unwrap();
    let done = t0() + Duration::seconds(360);
    assert!(matches!(
        rec.complete_background_processing(1, &policy, done + Duration::days(1)),
        Err(ConsentError::BackgroundStillRunning(_))
    ));
    assert_eq!(
        rec.complete_background_processing(0, &policy, done + Duration::days(3)),
        Err(ConsentError::CarNotDriven)
    );
    rec.complete_background_processing(1, &policy, done + Duration::days(3)).unwrap();
    assert_eq!(rec.state, ConsentState::AwaitingOdometerReport);
}

fn active_stellantis() -> (ConsentRecord, Timestamp) {
    let policy = ConsentPolicy::default();
    let mut rec = to_transmission_test();
    rec.run_transmission_test(run(t0(), true)).unwrap();
    let day3 = t0() + Duration::days(4);
    rec.complete_background_processing(2, &policy, day3).unwrap();
    rec.report_odometer(60_000.0, day3, None, Some(creds(7))).unwrap();
    (rec, day3)
}

#[test]
fn odometer_report_activates_and_guards_regression() {
    let (mut rec, day0) = active_stellantis();
    assert_eq!(rec.state, ConsentState::Active);
    assert_eq!(rec.last_odometer_report_at, Some(day0));
    assert_eq!(
        rec.report_odometer(50_000.0, day0 + Duration::days(10), None, None),
        Err(ConsentError::OdometerRegression { km: 50_000.0, floor_km: 60_000.0 })
    );
    assert_eq!(
        rec.report_odometer(61_000.0, day0 + Duration::days(10), Some(61_500.0), None),
        Err(ConsentError::OdometerRegression { km: 61_000.0, floor_km: 61_500.0 })
    );
    assert_eq!(rec.report_odometer(-1.0, day0, None, None), Err(ConsentError::InvalidOdometer));
}

#[test]
fn quarterly_expiry_and_resume() {
    let policy = ConsentPolicy::default();
    let (mut rec, day0) = active_stellantis();
    assert!(!rec.sweep_expiry(&policy, day0 + Duration::days(89)));
    assert!(rec.permits_collection(&policy, day0 + Duration::days(89)));
    assert!(rec.sweep_expiry(&policy, day0 + Duration::days(91)));
    assert_eq!(rec.state, ConsentState::Expired);
    assert!(!rec.permits_collection(&policy, day0 + Duration::days(91)));
    let ends: Vec<_> = rec.active_intervals();
    assert_eq!(ends, vec![(day0, Some(day0 + Duration::days(90)))]);
    rec.report_odometer(70_000.0, day0 + Duration::days(95), None, None).unwrap();
    assert_eq!(rec.state, ConsentState::Active);
    assert_eq!(rec.active_intervals().len(), 2);
}

#[test]
fn simple_portal_never_expires() {
    let policy = ConsentPolicy::default();
    let mut rec = fresh(ConsentVariant::SimplePortal);
    open_link(&mut rec);
    rec.confirm_on_oem_portal(true, Some(creds(1)), t0()).unwrap();
    assert!(!rec.sweep_expiry(&policy, t0() + Duration::days(400)));
    assert!(rec.permits_collection(&policy, t0() + Duration::days(400)));
}

#[test]
fn revoke_clears_credentials() {
    let (mut rec, day0) = active_stellantis();
    let refs = rec.revoke(RevocationSource::OemNotification, day0 + Duration::days(1)).unwrap();
    assert_eq!(refs.len(), 2);
    assert_eq!(rec.state, ConsentState::Revoked);
    assert_eq!(rec.revocation.as_ref().unwrap().source, RevocationSource::OemNotification);
    assert!(rec.access_token.is_none() && rec.refresh_token.is_none());
    assert_eq!(rec.revoke(RevocationSource::DriverPortal, day0), Err(ConsentError::AlreadyRevoked));
}

#[test]
fn reenrol_after_revoke_only() {
    let mut rec = fresh(ConsentVariant::SimplePortal);
    open_link(&mut rec);
    rec.confirm_on_oem_portal(true, Some(creds(1)), t0()).unwrap();
    let ok = eligible(VinCheckStatus::Eligible);
    assert_eq!(
        initiate_consent(Some(&rec), Some(&ok), &vin(), "driver@example.lu", rec.variant, &signer(), t0()),
        Err(ConsentError::ConsentAlreadyActive(vin()))
    );
    rec.revoke(RevocationSource::DriverPortal, t0()).unwrap();
    let again =
        initiate_consent(Some(&rec), Some(&ok), &vin(), "driver@example.lu", rec.variant, &signer(), t0()).unwrap();
    assert_eq!(again.enrolment, 2);
    assert_ne!(again.link, rec.link);
}

// ---- state-machine oracle -------------------------------------------------
//
// Hand-written expectation table: for every (variant, state, operation) the
// outcome the workflow must produce, written independently of the
// implementation's edge table.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Initiate,
    AcceptLink,
    Confirm,
    Identity,
    Privacy,
    Transmission,
    Background,
    Odometer,
    Revoke,
}

const OPS: [Op; 9] = [
    Op::Initiate,
    Op::AcceptLink,
    Op::Confirm,
    Op::Identity,
    Op::Privacy,
    Op::Transmission,
    Op::Background,
    Op::Odometer,
    Op::Revoke,
];

#[derive(Debug, PartialEq)]
enum Expect {
    To(ConsentState),
    WrongState,
    WrongVariant,
    AlreadyActive,
    AlreadyRevoked,
}

fn oracle(variant: ConsentVariant, state: ConsentState, op: Op) -> Expect {
    use ConsentState::*;
    use Expect::*;
    let simple = variant == ConsentVariant::SimplePortal;
    match op {
        Op::Initiate => {
            if state == Revoked {
                To(EmailSent)
            } else {
                AlreadyActive
            }
        }
        Op::AcceptLink => match state {
            EmailSent if simple => To(AwaitingOemConfirmation),
            EmailSent => To(IdentityVerification),
            _ => WrongState,
        },
        Op::Confirm => {
            if !simple {
                WrongVariant
            } else if state == AwaitingOemConfirmation {
                To(Active)
            } else {
                WrongState
            }
        }
        Op::Identity => if state == IdentityVerification { To(PrivacySettings) } else { WrongState },
        Op::Privacy => if state == PrivacySettings { To(TransmissionTest) } else { WrongState },
        Op::Transmission => if state == TransmissionTest { To(BackgroundProcessing) } else { WrongState },
        Op::Background => if state == BackgroundProcessing { To(AwaitingOdometerReport) } else { WrongState },
        Op::Odometer => match state {
            AwaitingOdometerReport | Active | Expired => To(Active),
            _ => WrongState,
        },
        Op::Revoke => if state == Revoked { AlreadyRevoked } else { To(Revoked) },
    }
}

fn forced(variant: ConsentVariant, state: ConsentState) -> ConsentRecord {
    let mut rec = fresh(variant);
    rec.state = state;
    rec.history.clear();
    rec.background_started_at = Some(t0() - Duration::days(10));
    rec
}

fn apply(rec: &mut ConsentRecord, op: Op) -> Result<(), ConsentError> {
    let policy = ConsentPolicy::default();
    let now = t0();
    match op {
        Op::Initiate => {
            let next = initiate_consent(
                Some(rec),
                Some(&eligible(VinCheckStatus::Eligible)),
                &vin(),
                "driver@example.lu",
                rec.variant,
                &signer(),
                now,
            )?;
            *rec = next;
            Ok(())
        }
        Op::AcceptLink => {
            let token = rec.link.clone().unwrap().token;
            rec.accept_link(&token, &signer(), now)
        }
        Op::Confirm => rec.confirm_on_oem_portal(true, Some(creds(1)), now),
        Op::Identity => rec.verify_identity(true, &policy, now).map(|_| ()),
        Op::Privacy => rec.configure_privacy_settings(PrivacyMechanism::DoublePush, PrivacyMechanism::DoublePush, now),
        Op::Transmission => rec.run_transmission_test(run(now, true)),
        Op::Background => rec.complete_background_processing(1, &policy, now),
        Op::Odometer => rec.report_odometer(10.0, now, None, Some(creds(2))),
        Op::Revoke => rec.revoke(RevocationSource::DriverPortal, now).map(|_| ()),
    }
}

#[test]
fn exhaustive_state_operation_table() {
    for variant in [ConsentVariant::SimplePortal, ConsentVariant::StellantisComplex] {
        for &state in &states_of(variant) {
            for op in OPS {
                let mut rec = forced(variant, state);
                let got = apply(&mut rec, op);
                let want = oracle(variant, state, op);
                let matches = match (&want, &got) {
                    (Expect::To(s), Ok(())) => rec.state == *s,
                    (Expect::WrongState, Err(ConsentError::WrongState { .. })) => true,
                    (Expect::WrongVariant, Err(ConsentError::WrongVariant { .. })) => true,
                    (Expect::AlreadyActive, Err(ConsentError::ConsentAlreadyActive(_))) => true,
                    (Expect::AlreadyRevoked, Err(ConsentError::AlreadyRevoked)) => true,
                    _ => false,
                };
                assert!(matches, "{variant:?} {state} {op:?}: want {want:?}, got {got:?} (now {})", rec.state);
            }
        }
    }
}

#[test]
fn confirm_on_stellantis_is_wrong_variant() {
    let mut rec = fresh(ConsentVariant::StellantisComplex);
    assert!(matches!(
        rec.confirm_on_oem_portal(true, Some(creds(1)), t0()),
        Err(ConsentError::WrongVariant { .. })
    ));
}

#[test]
fn identity_from_active_is_wrong_state() {
    let (mut rec, _) = active_stellantis();
    assert!(matches!(
        rec.verify_identity(true, &ConsentPolicy::default(), t0()),
        Err(ConsentError::WrongState { .. })
    ));
}

fn op_strategy() -> impl Strategy<Value = (Op, bool, i64)> {
    (0usize..OPS.len(), any::<bool>(), 0i64..(40 * 86_400)).prop_map(|(i, flag, dt)| (OPS[i], flag, dt))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// Random walks (with failures and time jumps) only ever follow declared
    /// edges, and the quarterly rule holds after every step.
    #[test]
    fn random_walks_stay_on_declared_edges(
        stellantis in any::<bool>(),
        steps in proptest::collection::vec(op_strategy(), 1..40),
    ) {
        let variant = if stellantis { ConsentVariant::StellantisComplex } else { ConsentVariant::SimplePortal };
        let policy = ConsentPolicy::default();
        let mut rec = fresh(variant);
        let mut now = t0();
        let mut km = 0.0;
        for (op, flag, dt) in steps {
            now += Duration::seconds(dt);
            rec.sweep_expiry(&policy, now);
            let _ = match op {
                Op::Initiate => initiate_consent(Some(&rec), Some(&eligible(VinCheckStatus::Eligible)), &vin(),
                    "driver@example.lu", variant, &signer(), now).map(|r| { rec = r; }),
                Op::AcceptLink => {
                    let token = rec.link.clone().unwrap().token;
                    rec.accept_link(&token, &signer(), now)
                }
                Op::Confirm => rec.confirm_on_oem_portal(flag, Some(creds(1)), now),
                Op::Identity => rec.verify_identity(flag, &policy, now).map(|_| ()),
                Op::Privacy => rec.configure_privacy_settings(
                    if flag { PrivacyMechanism::DoublePush } else { PrivacyMechanism::ScreenV3 },
                    PrivacyMechanism::DoublePush, now),
                Op::Transmission => rec.run_transmission_test(run(now, flag)),
                Op::Background => rec.complete_background_processing(usize::from(flag), &policy, now),
                Op::Odometer => { km += 10.0; rec.report_odometer(km, now, None, Some(creds(3))) }
                Op::Revoke => rec.revoke(RevocationSource::DriverPortal, now).map(|_| ()),
            };
            for t in &rec.history {
                prop_assert!(is_declared_edge(variant, t.from, t.to), "undeclared {} -> {}", t.from, t.to);
            }
            // Chains are contiguous within an enrolment; a new one restarts at Initiated.
            for w in rec.history.windows(2) {
                let restart = w[0].to == ConsentState::Revoked && w[1].from == ConsentState::Initiated;
                prop_assert!(restart || w[0].to == w[1].from, "{} then {}", w[0].to, w[1].from);
            }
            if rec.state == ConsentState::Active && variant == ConsentVariant::StellantisComplex {
                let last = rec.last_odometer_report_at.unwrap();
                prop_assert!(now - last <= Duration::days(90));
            }
        }
    }
}

#[test]
fn stellantis_reaches_active_in_bounded_time() {
    let policy = ConsentPolicy::default();
    let mut rec = fresh(ConsentVariant::StellantisComplex);
    let mut now = t0();
    open_link(&mut rec);
    now += Duration::minutes(10);
    rec.verify_identity(true, &policy, now).unwrap();
    now += Duration::minutes(10);
    rec.configure_privacy_settings(PrivacyMechanism::DoublePush, PrivacyMechanism::DoublePush, now).unwrap();
    rec.run_transmission_test(run(now, true)).unwrap();
    now += Duration::days(3) + Duration::seconds(360);
    rec.complete_background_processing(1, &policy, now).unwrap();
    rec.report_odometer(1000.0, now, None, Some(creds(1))).unwrap();
    assert_eq!(rec.state, ConsentState::Active);
    assert!(now - t0() <= Duration::days(4));
}

#[test]
fn record_json_roundtrip() {
    let (rec, _) = active_stellantis();
    let json = serde_json::to_string(&rec).unwrap();
    let back: ConsentRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rec);
    assert!(json.contains("\"state\":\"active\""));
    assert!(json.contains("\"variant\":\"stellantis_complex\""));
}
