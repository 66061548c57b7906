use crate::error::ApiError;
use crate::{openapi, valid_model_id, AppState};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::header::{ACCEPT, CONTENT_TYPE};
use axum::http::StatusCode;
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use podi_core::pipeline::{decode_model, ModelMetadata, PipelineError};
use podi_core::pump;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::sync::Arc;

/// Upper bound on `n` for `/pump/curve`.
const MAX_CURVE_POINTS: usize = 10_000;

pub(crate) fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/health", get(health))
        .route("/spec", get(spec))
        .route("/models", get(list_models).post(load_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/evaluate", post(evaluate))
        .route("/pump/forward", get(pump_forward))
        .route("/pump/inverse", get(pump_inverse))
        .route("/pump/calibrate", get(pump_calibrate))
        .route("/pump/curve", get(pump_curve))
        .fallback(fallback)
}

fn accepts_json(header: &str) -> bool {
    if header.trim().is_empty() {
        return true;
    }
    header.split(',').any(|range| {
        let mut parts = range.split(';');
        let media = parts.next().unwrap_or("").trim().to_ascii_lowercase();
        let refused =
            parts.any(|p| p.trim().strip_prefix("q=").and_then(|q| q.trim().parse::<f64>().ok()) == Some(0.0));
        !refused && matches!(media.as_str(), "*/*" | "application/*" | "application/json")
    })
}

/// Every response is JSON; requests that cannot take it get 406.
pub(crate) async fn require_json_accept(req: Request, next: Next) -> Response {
    if let Some(value) = req.headers().get(ACCEPT) {
        if !value.to_str().is_ok_and(accepts_json) {
            return ApiError::new(
                StatusCode::NOT_ACCEPTABLE,
                "not_acceptable",
                "responses are only available as application/json",
            )
            .into_response();
        }
    }
    next.run(req).await
}

async fn fallback() -> ApiError {
    ApiError::not_found("not_found", "no such endpoint")
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(v)| v)
        .map_err(|e| ApiError::new(e.status(), "invalid_body", e.body_text()))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "models": state.registry.len(),
    }))
}

async fn spec() -> Json<Value> {
    Json(openapi::document())
}

#[derive(Debug, Serialize)]
struct ModelEntry {
    id: String,
    metadata: ModelMetadata,
}

async fn list_models(State(state): State<Arc<AppState>>) -> Json<Value> {
    let models: Vec<ModelEntry> = state
        .registry
        .ids()
        .into_iter()
        .filter_map(|id| {
            let metadata = state.registry.get(&id)?.metadata();
            Some(ModelEntry { id, metadata })
        })
        .collect();
    Json(json!({ "models": models }))
}

async fn get_model(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ModelEntry>, ApiError> {
    let model = state.registry.get(&id).ok_or_else(|| {
        ApiError::not_found("unknown_model", format!("no model with id {id:?}")).with("id", id.clone())
    })?;
    Ok(Json(ModelEntry {
        id,
        metadata: model.metadata(),
    }))
}

/// Reference to a model file readable by the service.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadRequest {
    pub path: PathBuf,
    #[serde(default)]
    pub id: Option<String>,
}

async fn read_upload(mut form: Multipart) -> Result<(Vec<u8>, Option<String>), ApiError> {
    let invalid =
        |e: axum::extract::multipart::MultipartError| ApiError::new(e.status(), "invalid_body", e.body_text());
    let (mut bytes, mut id) = (None, None);
    while let Some(field) = form.next_field().await.map_err(invalid)? {
        match field.name() {
            Some("id") => id = Some(field.text().await.map_err(invalid)?),
            Some("model") => bytes = Some(field.bytes().await.map_err(invalid)?.to_vec()),
            _ => {}
        }
    }
    let bytes = bytes.ok_or_else(|| ApiError::bad_request("missing_model", "multipart body has no \"model\" part"))?;
    Ok((bytes, id))
}

async fn read_reference(state: &AppState, req: LoadRequest) -> Result<(Vec<u8>, Option<String>), ApiError> {
    let path = match &state.config.model_dir {
        Some(dir) if req.path.is_relative() => dir.join(&req.path),
        _ => req.path.clone(),
    };
    let bytes = tokio::fs::read(&path).await.map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let id = req
        .id
        .or_else(|| path.file_stem().and_then(|s| s.to_str()).map(str::to_string));
    Ok((bytes, id))
}

/// `POST /models`: JSON `{path, id?}` or multipart with a `model` file part
/// and an optional `id` text part. Without an id, the file stem (path
/// reference) or the model checksum (upload) is used.
async fn load_model(
    State(state): State<Arc<AppState>>,
    req: Request,
) -> Result<(StatusCode, Json<ModelEntry>), ApiError> {
    let content_type = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();
    let (bytes, id) = if content_type.starts_with("multipart/form-data") {
        let form = Multipart::from_request(req, &state)
            .await
            .map_err(|e| ApiError::new(e.status(), "invalid_body", e.body_text()))?;
        read_upload(form).await?
    } else {
        let reference = body(Json::<LoadRequest>::from_request(req, &state).await)?;
        read_reference(&state, reference).await?
    };

    let checksum_id = bytes
        .len()
        .checked_sub(4)
        .map(|at| format!("{:08x}", u32::from_le_bytes(bytes[at..].try_into().unwrap())));
    let model = tokio::task::spawn_blocking(move || decode_model(&bytes))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;

    let id = id
        .or(checksum_id)
        .ok_or_else(|| ApiError::bad_request("corrupt_model", "empty model"))?;
    if !valid_model_id(&id) {
        return Err(
            ApiError::unprocessable("invalid_id", "model ids use 1-128 characters from [A-Za-z0-9._-]").with("id", id),
        );
    }
    let model = state.registry.insert(id.clone(), model).map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            "duplicate_id",
            format!("model id {id:?} is already loaded"),
        )
        .with("id", id.clone())
    })?;
    tracing::info!(id = %id, "model registered");
    Ok((
        StatusCode::CREATED,
        Json(ModelEntry {
            id,
            metadata: model.metadata(),
        }),
    ))
}

/// A parameter given either as a bare number (`P = 1`) or as an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParameterInput {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ParameterInput {
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            Self::Scalar(x) => vec![x],
            Self::Vector(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub field: String,
    pub parameter: ParameterInput,
    /// Return every `stride`-th value; omitted means stats only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct StrideQuery {
    stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl FieldStats {
    pub fn of(values: &[f64]) -> Self {
        let (min, max, sum) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(lo, hi, s), &v| {
                (lo.min(v), hi.max(v), s + v)
            });
        Self {
            min,
            max,
            mean: sum / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldResponse {
    pub field: String,
    pub parameter: Vec<f64>,
    pub n_dof: usize,
    /// Over the full field, whatever the stride.
    pub stats: FieldStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// `ceil(n_dof / stride)` values when a stride was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    pub extrapolated: bool,
}

async fn evaluate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    stride_query: Result<Query<StrideQuery>, QueryRejection>,
    request: Result<Json<EvaluateRequest>, JsonRejection>,
) -> Result<Json<FieldResponse>, ApiError> {
    let stride_query = query(stride_query)?;
    let request = body(request)?;
    let model = state.registry.get(&id).ok_or_else(|| {
        ApiError::not_found("unknown_model", format!("no model with id {id:?}")).with("id", id.clone())
    })?;

    let stride = request.stride.or(stride_query.stride);
    if stride == Some(0) {
        return Err(ApiError::unprocessable("invalid_stride", "stride must be at least 1"));
    }
    let parameter = request.parameter.into_vec();
    if parameter.iter().any(|x| !x.is_finite()) {
        return Err(ApiError::unprocessable(
            "non_finite",
            "parameter coordinates must be finite",
        ));
    }
    model.field(&request.field)?;
    model.check_parameter_range(&parameter)?;

    let field = request.field;
    let response = tokio::task::spawn_blocking(move || -> Result<FieldResponse, ApiError> {
        let eval = model.evaluate_field_detailed(&field, &parameter)?;
        Ok(FieldResponse {
            stats: FieldStats::of(&eval.values),
            n_dof: eval.values.len(),
            values: stride.map(|s| eval.values.iter().step_by(s).copied().collect()),
            stride,
            extrapolated: eval.extrapolated,
            field,
            parameter,
        })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(response))
}

#[derive(Debug, Deserialize)]
struct SpeedFlow {
    omega: f64,
    pf: f64,
}

#[derive(Debug, Deserialize)]
struct SpeedHead {
    omega: f64,
    dp: f64,
}

#[derive(Debug, Deserialize)]
struct CurveQuery {
    omega: f64,
    n: Option<usize>,
}

#[derive(Debug, Serialize)]
struct PumpPoint {
    omega: f64,
    pf: f64,
    dp: f64,
}

async fn pump_forward(
    State(state): State<Arc<AppState>>,
    q: Result<Query<SpeedFlow>, QueryRejection>,
) -> Result<Json<PumpPoint>, ApiError> {
    let SpeedFlow { omega, pf } = query(q)?;
    let dp = pump::head_from_speed_flow(&state.config.pump, omega, pf)?;
    Ok(Json(PumpPoint { omega, pf, dp }))
}

async fn pump_inverse(
    State(state): State<Arc<AppState>>,
    q: Result<Query<SpeedHead>, QueryRejection>,
) -> Result<Json<PumpPoint>, ApiError> {
    let SpeedHead { omega, dp } = query(q)?;
    let op = pump::panel1(&state.config.pump, dp, omega)?;
    Ok(Json(PumpPoint { omega, pf: op.flow, dp }))
}

async fn pump_calibrate(
    State(state): State<Arc<AppState>>,
    q: Result<Query<SpeedFlow>, QueryRejection>,
) -> Result<Json<PumpPoint>, ApiError> {
    let SpeedFlow { omega, pf } = query(q)?;
    let dp = pump::panel2_calibrate(&state.config.pump, omega, pf)?;
    Ok(Json(PumpPoint { omega, pf, dp }))
}

#[derive(Debug, Serialize)]
struct CurvePoint {
    pf: f64,
    dp: f64,
}

async fn pump_curve(
    State(state): State<Arc<AppState>>,
    q: Result<Query<CurveQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let CurveQuery { omega, n } = query(q)?;
    let n = n.unwrap_or(50);
    if n > MAX_CURVE_POINTS {
        return Err(
            ApiError::unprocessable("too_many_points", format!("n must not exceed {MAX_CURVE_POINTS}")).with("n", n),
        );
    }
    let curve = &state.config.pump;
    let points: Vec<CurvePoint> = pump::curve_samples(curve, omega, n)?
        .into_iter()
        .map(|(pf, dp)| CurvePoint { pf, dp })
        .collect();
    Ok(Json(json!({
        "omega": omega,
        "pf_min": curve.pf_min,
        "pf_max": curve.pf_max,
        "curve": curve,
        "points": points,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accept_header_parsing() {
        for ok in [
            "",
            "*/*",
            "application/json",
            "text/html, application/json;q=0.9",
            "application/*",
            "APPLICATION/JSON",
        ] {
            assert!(accepts_json(ok), "{ok}");
        }
        for bad in ["text/html", "garbage", "application/json;q=0", "image/*"] {
            assert!(!accepts_json(bad), "{bad}");
        }
    }

    #[test]
    fn stats_cover_every_value() {
        let s = FieldStats::of(&[1.0, -2.0, 4.0, 1.0]);
        assert_eq!(
            s,
            FieldStats {
                min: -2.0,
                max: 4.0,
                mean: 1.0
            }
        );
    }

    #[test]
    fn parameter_input_forms() {
        let scalar: EvaluateRequest = serde_json::from_str(r#"{"field":"p","parameter":4.0}"#).unwrap();
        assert_eq!(scalar.parameter.into_vec(), vec![4.0]);
        let vector: EvaluateRequest =
            serde_json::from_str(r#"{"field":"p","parameter":[4.0, 1.5],"stride":3}"#).unwrap();
        assert_eq!(vector.parameter.into_vec(), vec![4.0, 1.5]);
        assert_eq!(vector.stride, Some(3));
    }
}
