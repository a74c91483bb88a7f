use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Duration;
use serde::{Deserialize, Serialize};
use serde_json::json;
use ubi_core::domain::Vin;
use ubi_core::simulator::{Aggregator, FaultPlan, GrantRequest};
use ubi_core::time::{self, Timestamp};

use crate::platform::kind_set;
use crate::{parse_time, ApiError, AppState};

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/oauth/token", post(token))
        .route("/vehicles/{vin}/data", get(data))
        .route("/sim/status", get(status))
        .route("/sim/advance", post(advance))
        .route("/sim/scenario", post(scenario))
}

async fn token(State(state): State<AppState>, Json(grant): Json<GrantRequest>) -> Response {
    let mut world = state.lock();
    let now = world.now();
    match world.sim_mut().token_exchange(&grant, now) {
        Ok(g) => Json(g).into_response(),
        Err(e) => (StatusCode::BAD_REQUEST, Json(e)).into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct DataQuery {
    kinds: Option<String>,
}

async fn data(
    State(state): State<AppState>,
    Path(vin): Path<String>,
    Query(q): Query<DataQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let vin = Vin::parse(&vin).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let kinds = kind_set(q.kinds.as_deref())?;
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or("")
        .trim()
        .to_string();
    let mut world = state.lock();
    let now = world.now();
    Ok(match world.sim_mut().fetch_data(&vin, &kinds, &bearer, now) {
        Ok(samples) => Json(samples).into_response(),
        Err(e) => {
            let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::BAD_GATEWAY);
            let mut resp = (status, Json(&e)).into_response();
            if let ubi_core::simulator::ApiError::QuotaExceeded { retry_after_secs } = e {
                resp.headers_mut().insert(header::RETRY_AFTER, retry_after_secs.into());
            }
            resp
        }
    })
}

#[derive(Debug, Serialize)]
struct SimStatus {
    #[serde(with = "time::rfc3339")]
    now: Timestamp,
    vehicles: usize,
    notifications_emitted: u64,
    data_calls: usize,
    pending_requests: usize,
}

fn sim_status(state: &AppState) -> SimStatus {
    let world = state.lock();
    SimStatus {
        now: world.now(),
        vehicles: world.sim().vehicles().count(),
        notifications_emitted: world.sim().emitted_count(),
        data_calls: world.sim().data_calls().len(),
        pending_requests: world.collector().pending_total(),
    }
}

async fn status(State(state): State<AppState>) -> Json<SimStatus> {
    Json(sim_status(&state))
}

#[derive(Debug, Deserialize)]
struct AdvanceBody {
    seconds: Option<i64>,
    to: Option<String>,
}

async fn advance(State(state): State<AppState>, Json(body): Json<AdvanceBody>) -> Result<Json<SimStatus>, ApiError> {
    {
        let mut world = state.lock();
        let target = match (body.seconds, parse_time(body.to.as_deref(), "to")?) {
            (Some(s), None) if s >= 0 => world.now() + Duration::seconds(s),
            (None, Some(t)) => t,
            _ => return Err(ApiError::bad_request("give either a non-negative seconds or a to timestamp")),
        };
        world.advance_to(target)?;
    }
    Ok(Json(sim_status(&state)))
}

#[derive(Debug, Deserialize)]
struct ScenarioBody {
    vin: String,
    fault_plan: FaultPlan,
}

async fn scenario(State(state): State<AppState>, Json(body): Json<ScenarioBody>) -> Result<Response, ApiError> {
    let vin = Vin::parse(&body.vin).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut world = state.lock();
    world
        .sim_mut()
        .apply_fault_plan(&vin, body.fault_plan)
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    Ok(Json(json!({ "vin": vin, "applied": true })).into_response())
}
