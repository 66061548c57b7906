use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use podi_core::pipeline::PipelineError;
use podi_core::pump::PumpError;
use podi_core::rbf::RbfError;
use serde_json::{json, Map, Value};

/// JSON error body: `{"error": {"code": ..., "message": ..., ...details}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Map<String, Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), value.into());
        self
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = Map::new();
        body.insert("code".into(), self.code.into());
        body.insert("message".into(), self.message.into());
        body.extend(self.details);
        (self.status, Json(json!({ "error": body }))).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match e {
            PipelineError::UnknownField(field) => Self::not_found("unknown_field", message).with("field", field),
            PipelineError::DimensionMismatch { expected, found, .. } => {
                Self::unprocessable("dimension_mismatch", message)
                    .with("expected", expected)
                    .with("found", found)
            }
            PipelineError::ParameterOutOfRange {
                coordinate,
                value,
                min,
                max,
            } => Self::unprocessable("parameter_out_of_range", message)
                .with("coordinate", coordinate)
                .with("value", value)
                .with("min", min)
                .with("max", max),
            PipelineError::CorruptModel(_) => Self::bad_request("corrupt_model", message),
            PipelineError::VersionMismatch { found, supported } => Self::bad_request("version_mismatch", message)
                .with("found", found)
                .with("supported", supported),
            PipelineError::Io { .. } => Self::bad_request("io_failure", message),
            PipelineError::Rbf(RbfError::NonFinite(_)) => Self::unprocessable("non_finite", message),
            PipelineError::Rbf(RbfError::DimensionMismatch { expected, found }) => {
                Self::unprocessable("dimension_mismatch", message)
                    .with("expected", expected)
                    .with("found", found)
            }
            _ => Self::internal(message),
        }
    }
}

impl From<PumpError> for ApiError {
    fn from(e: PumpError) -> Self {
        let message = e.to_string();
        match e {
            PumpError::InvalidSpeed(omega) => Self::unprocessable("invalid_speed", message).with("omega", omega),
            PumpError::NonFinite(what) => Self::unprocessable("non_finite", message).with("quantity", what),
            PumpError::NoRealRoot { omega, head } => Self::unprocessable("no_real_root", message)
                .with("omega", omega)
                .with("dp", head),
            PumpError::FlowOutOfRange { flow, min, max } => Self::unprocessable("flow_out_of_range", message)
                .with("pf", flow)
                .with("min", min)
                .with("max", max),
            PumpError::AmbiguousRoot(a, b) => Self::unprocessable("ambiguous_root", message).with("roots", vec![a, b]),
            PumpError::InvalidCurve(_) => Self::unprocessable("invalid_curve", message),
            PumpError::TooFewSamples(n) => Self::unprocessable("too_few_samples", message).with("n", n),
        }
    }
}
