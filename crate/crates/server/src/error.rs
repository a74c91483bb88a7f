use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use ubi_core::consent::ConsentError;
use ubi_core::eligibility::EligibilityError;
use ubi_core::ingestion::{IngestError, RequestError};
use ubi_core::world::WorldError;

/// JSON error body `{"error": code, "message": text}` with a status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

fn consent_status(e: &ConsentError) -> (StatusCode, &'static str) {
    use ConsentError::*;
    match e {
        NotEligible(_) => (StatusCode::CONFLICT, "not_eligible"),
        ConsentAlreadyActive(_) => (StatusCode::CONFLICT, "consent_already_active"),
        UnknownConsent(_) => (StatusCode::NOT_FOUND, "unknown_consent"),
        WrongState { .. } => (StatusCode::CONFLICT, "wrong_state"),
        WrongVariant { .. } => (StatusCode::CONFLICT, "wrong_variant"),
        MechanismMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "mechanism_mismatch"),
        CarNotDriven => (StatusCode::CONFLICT, "car_not_driven"),
        BackgroundStillRunning(_) => (StatusCode::CONFLICT, "background_still_running"),
        OdometerRegression { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "odometer_regression"),
        InvalidOdometer => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_odometer"),
        AlreadyRevoked => (StatusCode::CONFLICT, "already_revoked"),
        MissingCredentials => (StatusCode::INTERNAL_SERVER_ERROR, "missing_credentials"),
        InvalidEmail(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_email"),
        InvalidLink(_) => (StatusCode::FORBIDDEN, "invalid_link"),
        LinkAlreadyUsed => (StatusCode::FORBIDDEN, "link_already_used"),
        UndeclaredTransition { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "undeclared_transition"),
    }
}

impl From<WorldError> for ApiError {
    fn from(e: WorldError) -> Self {
        let (status, code) = match &e {
            WorldError::Consent(c) => consent_status(c),
            WorldError::Eligibility(EligibilityError::UnknownVinAtOem(_)) => (StatusCode::NOT_FOUND, "unknown_vin"),
            WorldError::Eligibility(_) => (StatusCode::UNPROCESSABLE_ENTITY, "eligibility"),
            WorldError::UnknownVehicle(_) => (StatusCode::NOT_FOUND, "unknown_vehicle"),
            WorldError::NoConsent(_) => (StatusCode::NOT_FOUND, "no_consent"),
            WorldError::ClockBackwards(_) => (StatusCode::CONFLICT, "clock_backwards"),
            WorldError::Ingest(IngestError::UnknownBrand(_)) => (StatusCode::NOT_FOUND, "unknown_brand"),
            WorldError::Ingest(IngestError::Storage(_)) | WorldError::Storage(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "storage")
            }
            WorldError::Ingest(_) => (StatusCode::BAD_REQUEST, "bad_webhook"),
            WorldError::Request(RequestError::ConsentInactive(_)) => (StatusCode::CONFLICT, "consent_inactive"),
            WorldError::Request(RequestError::QuotaDeferred { .. }) => (StatusCode::TOO_MANY_REQUESTS, "quota_deferred"),
            WorldError::Request(_) => (StatusCode::BAD_GATEWAY, "upstream"),
            WorldError::Analytics(_) => (StatusCode::UNPROCESSABLE_ENTITY, "analytics"),
            WorldError::Simulator(_) | WorldError::OAuth(_) => (StatusCode::BAD_GATEWAY, "upstream"),
            WorldError::Config(_) => (StatusCode::BAD_REQUEST, "config"),
        };
        Self::new(status, code, e.to_string())
    }
}
