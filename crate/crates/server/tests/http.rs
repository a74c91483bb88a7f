use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use ubi_core::domain::{BrandId, NotificationEvent, NotificationKind, Vin};
use ubi_core::signing;
use ubi_core::simulator::derived_webhook_secret;
use ubi_core::world::World;
use ubi_server::{router, AppState};

fn epoch() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 9, 0, 0, 0).unwrap()
}

fn app_with(presets: &[&str]) -> (Router, AppState) {
    let mut world = World::in_memory(3, epoch(), presets).unwrap();
    for p in presets {
        world.enroll_preset(p).unwrap();
    }
    let state = AppState::new(world);
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

const BMW: &str = "WBAX5AAAL00000103";
const MERCEDES: &str = "W1NGLAAAL00000108";
const PEUGEOT: &str = "VF320AAAL00000110";

async fn activate_simple(app: &Router, vin: &str) -> Value {
    let (s, _) = call(app, "POST", &format!("/vehicles/{vin}/eligibility"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, rec) = call(app, "POST", "/consents", Some(json!({"vin": vin, "driver_email": "d@example.lu"}))).await;
    assert_eq!(s, StatusCode::CREATED, "{rec}");
    assert_eq!(rec["state"], "email_sent");
    let token = rec["link"]["token"].as_str().unwrap().to_string();
    let (s, rec) = call(app, "POST", &format!("/consents/{vin}/actions/accept-link"), Some(json!({"token": token}))).await;
    assert_eq!(s, StatusCode::OK, "{rec}");
    let (s, rec) = call(app, "POST", &format!("/consents/{vin}/actions/confirm"), Some(json!({"approved": true}))).await;
    assert_eq!(s, StatusCode::OK, "{rec}");
    assert_eq!(rec["state"], "active");
    rec
}

#[tokio::test]
async fn vehicles_are_listed_with_consent_state() {
    let (app, _) = app_with(&["bmw-x5", "mercedes-clean"]);
    let (s, list) = call(&app, "GET", "/vehicles", None).await;
    assert_eq!(s, StatusCode::OK);
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert!(list.iter().all(|v| v["consent_state"].is_null()));
    let (s, _) = call(&app, "GET", "/vehicles/WBA00000000000999", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/vehicles/not-a-vin", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn simple_portal_consent_over_http() {
    let (app, _) = app_with(&["bmw-x5"]);
    activate_simple(&app, BMW).await;
    let (_, rec) = call(&app, "GET", &format!("/consents/{BMW}"), None).await;
    assert_eq!(rec["state"], "active");
    assert!(rec["access_token"].as_str().unwrap().starts_with("vault:"));
    let (s, err) = call(&app, "POST", "/consents", Some(json!({"vin": BMW, "driver_email": "d@example.lu"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "consent_already_active");
    let (s, rec) = call(&app, "POST", &format!("/consents/{BMW}/actions/revoke"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rec["state"], "revoked");
    let (s, err) = call(&app, "POST", &format!("/consents/{BMW}/actions/revoke"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "already_revoked");
}

#[tokio::test]
async fn consent_errors_map_to_statuses() {
    let (app, _) = app_with(&["peugeot-208"]);
    let (s, err) = call(&app, "POST", "/consents", Some(json!({"vin": PEUGEOT, "driver_email": "d@example.lu"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "not_eligible");
    call(&app, "POST", &format!("/vehicles/{PEUGEOT}/eligibility"), None).await;
    let (_, rec) = call(&app, "POST", "/consents", Some(json!({"vin": PEUGEOT, "driver_email": "d@example.lu"}))).await;
    let (s, err) = call(&app, "POST", &format!("/consents/{PEUGEOT}/actions/accept-link"), Some(json!({"token": "forged"}))).await;
    assert_eq!(s, StatusCode::FORBIDDEN, "{err}");
    let token = rec["link"]["token"].as_str().unwrap();
    call(&app, "POST", &format!("/consents/{PEUGEOT}/actions/accept-link"), Some(json!({"token": token}))).await;
    let (s, err) = call(&app, "POST", &format!("/consents/{PEUGEOT}/actions/confirm"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "wrong_variant");
    let (s, _) = call(&app, "POST", &format!("/consents/{PEUGEOT}/actions/identity"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", &format!("/consents/{PEUGEOT}/actions/teleport"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn complex_consent_over_http() {
    let (app, state) = app_with(&["peugeot-208"]);
    call(&app, "POST", &format!("/vehicles/{PEUGEOT}/eligibility"), None).await;
    let (_, rec) = call(&app, "POST", "/consents", Some(json!({"vin": PEUGEOT, "driver_email": "d@example.lu"}))).await;
    let token = rec["link"]["token"].as_str().unwrap();
    let base = format!("/consents/{PEUGEOT}/actions");
    call(&app, "POST", &format!("{base}/accept-link"), Some(json!({"token": token}))).await;
    let (_, rec) = call(&app, "POST", &format!("{base}/identity"), Some(json!({"passed": true}))).await;
    assert_eq!(rec["state"], "privacy_settings");
    let (s, err) = call(&app, "POST", &format!("{base}/privacy"), Some(json!({"mechanism": "screen_v1"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
    let (_, rec) = call(&app, "POST", &format!("{base}/privacy"), Some(json!({"mechanism": "double_push"}))).await;
    assert_eq!(rec["state"], "transmission_test");
    let (_, rec) = call(&app, "POST", &format!("{base}/transmission-test"), None).await;
    assert_eq!(rec["state"], "background_processing", "{rec}");
    let (s, _) = call(&app, "POST", "/sim/advance", Some(json!({"seconds": 4 * 86_400}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, rec) = call(&app, "POST", &format!("{base}/background"), None).await;
    assert_eq!(s, StatusCode::OK, "{rec}");
    assert_eq!(rec["state"], "awaiting_odometer_report");
    let km = state.lock().odometer_now(&Vin::parse(PEUGEOT).unwrap()).unwrap();
    let (s, err) = call(&app, "POST", &format!("{base}/odometer-report"), Some(json!({"km": -1.0}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
    let (_, rec) = call(&app, "POST", &format!("{base}/odometer-report"), Some(json!({"km": km}))).await;
    assert_eq!(rec["state"], "active");
}

#[tokio::test]
async fn collected_series_and_reports_are_served() {
    let (app, _) = app_with(&["mercedes-clean"]);
    activate_simple(&app, MERCEDES).await;
    call(&app, "POST", "/sim/advance", Some(json!({"seconds": 7 * 86_400}))).await;
    let (s, series) = call(&app, "GET", &format!("/vehicles/{MERCEDES}/series/odometer"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(series.as_array().unwrap().len(), 14);
    let (_, series) = call(
        &app,
        "GET",
        &format!("/vehicles/{MERCEDES}/series/odometer?from=2023-01-10T00:00:00Z&to=2023-01-11T00:00:00Z"),
        None,
    )
    .await;
    assert_eq!(series.as_array().unwrap().len(), 2);
    let (s, _) = call(&app, "GET", &format!("/vehicles/{MERCEDES}/series/warp_speed"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (_, last) = call(&app, "GET", &format!("/vehicles/{MERCEDES}/last-known?kinds=odometer,fuel_volume"), None).await;
    assert!(last["odometer"].is_object());
    assert!(last.get("fuel_volume").is_none());
    let (s, risk) = call(&app, "GET", &format!("/vehicles/{MERCEDES}/reports/risk"), None).await;
    assert_eq!(s, StatusCode::OK, "{risk}");
    assert_eq!(risk["source"], "odometer_polls");
    let (_, cost) = call(&app, "GET", &format!("/vehicles/{MERCEDES}/reports/cost?premium=81.25"), None).await;
    assert!((cost["ratio"].as_f64().unwrap() - 2.1 / 81.25).abs() < 1e-12);
    assert_eq!(cost["verdict"], "viable");
    let (s, _) = call(&app, "GET", &format!("/vehicles/{MERCEDES}/reports/cost"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, summary) = call(&app, "GET", &format!("/vehicles/{MERCEDES}/reports/summary?premium=81.25"), None).await;
    assert_eq!(s, StatusCode::OK, "{summary}");
    assert_eq!(summary["vin"], MERCEDES);
    let (_, metrics) = call(&app, "GET", "/metrics", None).await;
    let text = metrics.as_str().unwrap();
    assert!(text.lines().any(|l| l == "samples_stored 14"), "{text}");
    assert!(text.contains("slots_missed 0"));
}

#[tokio::test]
async fn gps_vehicle_trips_and_theft_report() {
    let (app, _) = app_with(&["bmw-x5"]);
    activate_simple(&app, BMW).await;
    call(&app, "POST", "/sim/advance", Some(json!({"seconds": 5 * 86_400}))).await;
    let (s, trips) = call(&app, "GET", &format!("/vehicles/{BMW}/trips"), None).await;
    assert_eq!(s, StatusCode::OK, "{trips}");
    assert!(!trips.as_array().unwrap().is_empty());
    let (s, theft) = call(&app, "GET", &format!("/vehicles/{BMW}/reports/theft"), None).await;
    assert_eq!(s, StatusCode::OK, "{theft}");
    assert!(theft["last_trajectory"].is_array());
    let (_, series) = call(&app, "GET", &format!("/vehicles/{BMW}/series/gps_coordinates?downsample_secs=3600"), None).await;
    assert!(!series.as_array().unwrap().is_empty());
}

fn signed(vin: &str, kind: NotificationKind, id: &str, secret: &[u8]) -> (String, String) {
    let ev = NotificationEvent { vin: Vin::parse(vin).unwrap(), kind, emitted_at: epoch(), delivery_id: id.into() };
    let body = serde_json::to_string(&ev).unwrap();
    let sig = signing::webhook_signature(secret, body.as_bytes());
    (body, sig)
}

async fn post_webhook(app: &Router, brand: &str, id: &str, body: String, sig: &str) -> (StatusCode, Value) {
    let req = Request::post(format!("/webhooks/{brand}"))
        .header("delivery_id", id)
        .header("signature", sig)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn webhook_endpoint_verifies_and_deduplicates() {
    let (app, _) = app_with(&["bmw-x5"]);
    activate_simple(&app, BMW).await;
    let secret = derived_webhook_secret(&BrandId::new("bmw"));
    let (body, sig) = signed(BMW, NotificationKind::AccidentReported, "dlv_http1", secret.as_bytes());
    let (s, rec) = post_webhook(&app, "bmw", "dlv_http1", body.clone(), &sig).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rec["disposition"], "stored");
    let (_, rec) = post_webhook(&app, "bmw", "dlv_http1", body.clone(), &sig).await;
    assert_eq!(rec["disposition"], "ignored_duplicate");
    let (s, _) = post_webhook(&app, "bmw", "dlv_http1", body.clone(), "sha256=00").await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = post_webhook(&app, "acme", "dlv_http1", body, &sig).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (_, events) = call(&app, "GET", &format!("/vehicles/{BMW}/events"), None).await;
    assert_eq!(events.as_array().unwrap().iter().filter(|e| e["delivery_id"] == "dlv_http1").count(), 1);
    let (body, sig) = signed(BMW, NotificationKind::RevokeOfConsent, "dlv_http2", secret.as_bytes());
    post_webhook(&app, "bmw", "dlv_http2", body, &sig).await;
    let (_, rec) = call(&app, "GET", &format!("/consents/{BMW}"), None).await;
    assert_eq!(rec["state"], "revoked");
    assert_eq!(rec["revocation"]["source"], "oem_notification");
}

#[tokio::test]
async fn oem_token_and_data_endpoints() {
    let (app, state) = app_with(&["bmw-x5"]);
    let code = {
        let mut world = state.lock();
        let now = world.now();
        world.sim_mut().approve_data_sharing(&Vin::parse(BMW).unwrap(), now).unwrap()
    };
    let (s, grant) = call(&app, "POST", "/oauth/token", Some(json!({"grant_type": "authorization_code", "code": code}))).await;
    assert_eq!(s, StatusCode::OK, "{grant}");
    let token = grant["access_token"].as_str().unwrap().to_string();
    let (s, _) = call(&app, "POST", "/oauth/token", Some(json!({"grant_type": "authorization_code", "code": code}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let get = |auth: Option<String>, kinds: &str| {
        let mut req = Request::get(format!("/vehicles/{BMW}/data?kinds={kinds}"));
        if let Some(a) = auth {
            req = req.header("authorization", a);
        }
        let app = app.clone();
        async move { app.oneshot(req.body(Body::empty()).unwrap()).await.unwrap() }
    };
    assert_eq!(get(Some(format!("Bearer {token}")), "odometer").await.status(), StatusCode::OK);
    assert_eq!(get(None, "odometer").await.status(), StatusCode::UNAUTHORIZED);
    assert_eq!(get(Some(format!("Bearer {token}")), "nope").await.status(), StatusCode::BAD_REQUEST);
    let mut last = StatusCode::OK;
    for _ in 0..60 {
        last = get(Some(format!("Bearer {token}")), "odometer").await.status();
        if last != StatusCode::OK {
            break;
        }
    }
    assert_eq!(last, StatusCode::TOO_MANY_REQUESTS);
    let refresh = grant["refresh_token"].as_str().unwrap();
    let (s, g2) = call(&app, "POST", "/oauth/token", Some(json!({"grant_type": "refresh_token", "refresh_token": refresh}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_ne!(g2["access_token"], grant["access_token"]);
}

#[tokio::test]
async fn simulation_control() {
    let (app, _) = app_with(&["bmw-x5"]);
    let (_, st) = call(&app, "GET", "/sim/status", None).await;
    assert_eq!(st["now"], "2023-01-09T00:00:00.000Z");
    let (_, st) = call(&app, "POST", "/sim/advance", Some(json!({"seconds": 3600}))).await;
    assert_eq!(st["now"], "2023-01-09T01:00:00.000Z");
    let (s, _) = call(&app, "POST", "/sim/advance", Some(json!({"to": "2023-01-01T00:00:00Z"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "POST", "/sim/advance", Some(json!({"seconds": -5}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let outage = json!({"vin": BMW, "fault_plan": {"api_outages": [{"from": "2023-01-09T01:00:00Z", "to": "2023-01-10T00:00:00Z"}]}});
    let (s, r) = call(&app, "POST", "/sim/scenario", Some(outage)).await;
    assert_eq!(s, StatusCode::OK, "{r}");
}

#[tokio::test]
async fn enroll_over_http() {
    let (app, _) = app_with(&["bmw-x5"]);
    let vehicle = json!({
        "vin": "WBA00000000000777", "brand": "BMW", "model": "i3", "production_year": 2021,
        "purchase_country": "LU", "fidelity_program_member": true
    });
    let (s, v) = call(&app, "POST", "/vehicles", Some(vehicle)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["brand"], "bmw");
    assert_eq!(v["tz"], "Europe/Luxembourg");
    let bad = json!({
        "vin": "WBA00000000000778", "brand": "Trabant", "model": "601", "production_year": 1980,
        "purchase_country": "DE", "fidelity_program_member": false
    });
    let (s, _) = call(&app, "POST", "/vehicles", Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
