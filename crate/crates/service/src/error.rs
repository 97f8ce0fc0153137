use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// JSON error response: `{"error": <kind>, "message": <text>}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    pub fn not_found(kind: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, kind, message)
    }

    /// Failures to resolve a state id are reported as unknown states.
    pub fn state(err: ipg_core::Error) -> Self {
        ApiError::not_found(err.kind(), err.to_string())
    }
}

impl From<ipg_core::Error> for ApiError {
    fn from(err: ipg_core::Error) -> Self {
        use ipg_core::Error as E;
        let status = match &err {
            E::UnseenState(_) => StatusCode::NOT_FOUND,
            E::InvalidClause(_)
            | E::UnknownVariable(_)
            | E::UnknownValue { .. }
            | E::MissingVariable(_)
            | E::UnknownAction(_)
            | E::MalformedStateId(_)
            | E::SpaceMismatch
            | E::Config(_)
            | E::PropagationBudget { .. }
            | E::ZeroIntention { .. }
            | E::NoImprovingPath { .. }
            | E::NoEvidence { .. }
            | E::EmptyGraph => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, err.kind(), err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.kind,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}
