use std::collections::BTreeSet;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Duration;
use serde::{Deserialize, Serialize};
use ubi_core::analytics::{self, DEFAULT_VIABILITY_THRESHOLD};
use ubi_core::consent::{ConsentRecord, ConsentState};
use ubi_core::domain::{parse_kind_list, DataPointKind, PrivacyMechanism, Vehicle, Vin};
use ubi_core::eligibility::EligibilityOutcome;
use ubi_core::ingestion::WebhookHeaders;
use ubi_core::storage::TimeRange;
use ubi_core::world::{ConsentStep, World};

use crate::{parse_time, ApiError, AppState};

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/vehicles", get(list_vehicles).post(enroll_vehicle))
        .route("/vehicles/{vin}", get(vehicle_detail))
        .route("/vehicles/{vin}/eligibility", post(check_eligibility))
        .route("/vehicles/{vin}/series/{kind}", get(series))
        .route("/vehicles/{vin}/last-known", get(last_known))
        .route("/vehicles/{vin}/events", get(events))
        .route("/vehicles/{vin}/trips", get(trips))
        .route("/vehicles/{vin}/reports/risk", get(risk_report))
        .route("/vehicles/{vin}/reports/theft", get(theft_report))
        .route("/vehicles/{vin}/reports/cost", get(cost_report))
        .route("/vehicles/{vin}/reports/summary", get(summary_report))
        .route("/consents", post(initiate_consent))
        .route("/consents/{vin}", get(show_consent))
        .route("/consents/{vin}/actions/{action}", post(consent_action))
        .route("/webhooks/{brand}", post(receive_webhook))
        .route("/metrics", get(metrics))
}

fn parse_vin(raw: &str) -> Result<Vin, ApiError> {
    Vin::parse(raw).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Debug, Serialize)]
struct VehicleView {
    #[serde(flatten)]
    vehicle: Vehicle,
    consent_state: Option<ConsentState>,
    eligible: Option<bool>,
    data_points: usize,
}

fn vehicle_view(world: &World, v: &Vehicle) -> VehicleView {
    let records = world.statics().records();
    VehicleView {
        vehicle: v.clone(),
        consent_state: records.consent(&v.vin).map(|c| c.state),
        eligible: records.outcome(&v.vin).map(EligibilityOutcome::is_eligible),
        data_points: world.data_points(&v.vin),
    }
}

async fn list_vehicles(State(state): State<AppState>) -> Json<Vec<VehicleView>> {
    let world = state.lock();
    Json(world.statics().records().vehicles().map(|v| vehicle_view(&world, v)).collect())
}

async fn enroll_vehicle(State(state): State<AppState>, Json(vehicle): Json<Vehicle>) -> Result<Response, ApiError> {
    let mut world = state.lock();
    let vin = vehicle.vin.clone();
    world.enroll(vehicle)?;
    let v = world.statics().records().vehicle(&vin).cloned().expect("just enrolled");
    Ok((StatusCode::CREATED, Json(vehicle_view(&world, &v))).into_response())
}

#[derive(Debug, Serialize)]
struct VehicleDetail {
    #[serde(flatten)]
    view: VehicleView,
    consent: Option<ConsentRecord>,
    eligibility: Option<EligibilityOutcome>,
}

async fn vehicle_detail(State(state): State<AppState>, Path(vin): Path<String>) -> Result<Json<VehicleDetail>, ApiError> {
    let vin = parse_vin(&vin)?;
    let world = state.lock();
    let records = world.statics().records();
    let v = records.vehicle(&vin).ok_or_else(|| ApiError::not_found(format!("vehicle {vin} is not enrolled")))?;
    Ok(Json(VehicleDetail {
        view: vehicle_view(&world, v),
        consent: records.consent(&vin).cloned(),
        eligibility: records.outcome(&vin).cloned(),
    }))
}

async fn check_eligibility(
    State(state): State<AppState>,
    Path(vin): Path<String>,
) -> Result<Json<EligibilityOutcome>, ApiError> {
    let vin = parse_vin(&vin)?;
    Ok(Json(state.lock().check_eligibility(&vin)?))
}

#[derive(Debug, Default, Deserialize)]
struct RangeQuery {
    from: Option<String>,
    to: Option<String>,
    downsample_secs: Option<i64>,
    kinds: Option<String>,
    premium: Option<f64>,
    threshold: Option<f64>,
}

impl RangeQuery {
    fn range(&self) -> Result<TimeRange, ApiError> {
        Ok(TimeRange { from: parse_time(self.from.as_deref(), "from")?, to: parse_time(self.to.as_deref(), "to")? })
    }

    /// Closed period for reports; defaults to simulation start until now.
    fn period(&self, world: &World) -> Result<(chrono::DateTime<chrono::Utc>, chrono::DateTime<chrono::Utc>), ApiError> {
        let r = self.range()?;
        Ok((r.from.unwrap_or(world.config().simulation.epoch), r.to.unwrap_or(world.now())))
    }
}

fn enrolled(world: &World, vin: &Vin) -> Result<(), ApiError> {
    match world.statics().records().vehicle(vin) {
        Some(_) => Ok(()),
        None => Err(ApiError::not_found(format!("vehicle {vin} is not enrolled"))),
    }
}

async fn series(
    State(state): State<AppState>,
    Path((vin, kind)): Path<(String, String)>,
    Query(q): Query<RangeQuery>,
) -> Result<Response, ApiError> {
    let vin = parse_vin(&vin)?;
    let kind: DataPointKind = kind.parse().map_err(|e: ubi_core::domain::UnknownKind| ApiError::bad_request(e.to_string()))?;
    let downsample = match q.downsample_secs {
        Some(s) if s <= 0 => return Err(ApiError::bad_request("downsample_secs must be positive")),
        Some(s) => Some(Duration::seconds(s)),
        None => None,
    };
    let world = state.lock();
    enrolled(&world, &vin)?;
    Ok(Json(world.series().query_series(&vin, kind, q.range()?, downsample)).into_response())
}

async fn last_known(
    State(state): State<AppState>,
    Path(vin): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<Response, ApiError> {
    let vin = parse_vin(&vin)?;
    let kinds: Vec<DataPointKind> = match q.kinds.as_deref() {
        Some(raw) => parse_kind_list::<DataPointKind>(raw)
            .map_err(|e| ApiError::bad_request(e.to_string()))?
            .into_iter()
            .collect(),
        None => DataPointKind::ALL.to_vec(),
    };
    let world = state.lock();
    enrolled(&world, &vin)?;
    Ok(Json(world.series().last_known(&vin, &kinds)).into_response())
}

async fn events(
    State(state): State<AppState>,
    Path(vin): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<Response, ApiError> {
    let vin = parse_vin(&vin)?;
    let world = state.lock();
    enrolled(&world, &vin)?;
    Ok(Json(world.series().events(&vin, q.range()?)).into_response())
}

async fn trips(
    State(state): State<AppState>,
    Path(vin): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<Response, ApiError> {
    let vin = parse_vin(&vin)?;
    let world = state.lock();
    enrolled(&world, &vin)?;
    Ok(Json(world.trip_summaries(&vin, q.range()?)?).into_response())
}

async fn risk_report(
    State(state): State<AppState>,
    Path(vin): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<Response, ApiError> {
    let vin = parse_vin(&vin)?;
    let world = state.lock();
    enrolled(&world, &vin)?;
    let (from, to) = q.period(&world)?;
    Ok(Json(world.risk_features(&vin, from, to)?).into_response())
}

async fn theft_report(State(state): State<AppState>, Path(vin): Path<String>) -> Result<Response, ApiError> {
    let vin = parse_vin(&vin)?;
    let world = state.lock();
    enrolled(&world, &vin)?;
    Ok(Json(world.theft_report(&vin)?).into_response())
}

async fn cost_report(
    State(state): State<AppState>,
    Path(vin): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<Response, ApiError> {
    let vin = parse_vin(&vin)?;
    let premium = q.premium.ok_or_else(|| ApiError::bad_request("premium is required"))?;
    let world = state.lock();
    let cost = world.data_cost(&vin)?;
    let report = analytics::cost_viability(cost, premium, q.threshold.unwrap_or(DEFAULT_VIABILITY_THRESHOLD))
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "analytics", e.to_string()))?;
    Ok(Json(report).into_response())
}

async fn summary_report(
    State(state): State<AppState>,
    Path(vin): Path<String>,
    Query(q): Query<RangeQuery>,
) -> Result<Response, ApiError> {
    let vin = parse_vin(&vin)?;
    let world = state.lock();
    enrolled(&world, &vin)?;
    let (from, to) = q.period(&world)?;
    Ok(Json(world.vin_report(&vin, from, to, q.premium)?).into_response())
}

#[derive(Debug, Deserialize)]
struct InitiateBody {
    vin: String,
    driver_email: String,
}

async fn initiate_consent(State(state): State<AppState>, Json(body): Json<InitiateBody>) -> Result<Response, ApiError> {
    let vin = parse_vin(&body.vin)?;
    let rec = state.lock().initiate_consent(&vin, &body.driver_email)?;
    Ok((StatusCode::CREATED, Json(rec)).into_response())
}

async fn show_consent(State(state): State<AppState>, Path(vin): Path<String>) -> Result<Json<ConsentRecord>, ApiError> {
    let vin = parse_vin(&vin)?;
    let world = state.lock();
    world.consent(&vin).cloned().map(Json).ok_or_else(|| ApiError::not_found(format!("no consent for {vin}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionBody {
    token: Option<String>,
    approved: Option<bool>,
    passed: Option<bool>,
    mechanism: Option<PrivacyMechanism>,
    km: Option<f64>,
}

fn require<T>(v: Option<T>, field: &str) -> Result<T, ApiError> {
    v.ok_or_else(|| ApiError::bad_request(format!("{field} is required")))
}

async fn consent_action(
    State(state): State<AppState>,
    Path((vin, action)): Path<(String, String)>,
    body: Bytes,
) -> Result<Json<ConsentRecord>, ApiError> {
    let vin = parse_vin(&vin)?;
    let body: ActionBody = if body.iter().all(u8::is_ascii_whitespace) {
        ActionBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let step = match action.as_str() {
        "accept-link" => ConsentStep::AcceptLink { token: require(body.token, "token")? },
        "confirm" => ConsentStep::OemConfirm { approved: body.approved.unwrap_or(true) },
        "identity" => ConsentStep::VerifyIdentity { passed: require(body.passed, "passed")? },
        "privacy" => ConsentStep::PrivacySettings { mechanism: require(body.mechanism, "mechanism")? },
        "transmission-test" => ConsentStep::TransmissionTest,
        "background" => ConsentStep::CompleteBackground,
        "odometer-report" => ConsentStep::ReportOdometer { km: require(body.km, "km")? },
        "revoke" => return Ok(Json(state.lock().revoke(&vin)?)),
        other => return Err(ApiError::not_found(format!("unknown consent action {other:?}"))),
    };
    Ok(Json(state.lock().consent_step(&vin, step)?))
}

async fn receive_webhook(
    State(state): State<AppState>,
    Path(brand): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let pairs = headers.iter().filter_map(|(k, v)| v.to_str().ok().map(|v| (k.as_str(), v)));
    let headers = WebhookHeaders::from_pairs(pairs);
    let rec = state.lock().receive_webhook(&brand, &headers, &body)?;
    let status = StatusCode::from_u16(rec.http_status()).unwrap_or(StatusCode::OK);
    Ok((status, Json(rec)).into_response())
}

async fn metrics(State(state): State<AppState>) -> String {
    state.lock().collector().metrics().render()
}

/// Kinds in a comma-separated query value; empty means none.
pub(crate) fn kind_set(raw: Option<&str>) -> Result<BTreeSet<DataPointKind>, ApiError> {
    parse_kind_list(raw.unwrap_or("")).map_err(|e| ApiError::bad_request(e.to_string()))
}

