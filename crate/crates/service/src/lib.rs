//! HTTP facade over the design, sensitivity, simulation and McNemar
//! operations. Every non-2xx response carries a single [`ApiError`] body.

use std::path::PathBuf;

use axum::body::Bytes;
use axum::http::{Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use bridge_core::concordance::{self, McNemarMode};
use bridge_core::design::{self, DesignError, DesignSpec, SweepField};
use bridge_core::io::SCHEMA_VERSION;
use bridge_core::simulator::{self, SimError, SimScenario};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

/// Largest replicate count accepted by the simulate endpoint.
pub const MAX_API_REPLICATES: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug)]
struct Failure(StatusCode, ApiError);

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, field: Option<String>) -> Self {
        Failure(status, ApiError { code: code.into(), message: message.into(), field })
    }

    fn bad_request(code: &str, message: impl Into<String>, field: Option<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message, field)
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, axum::Json(self.1)).into_response()
    }
}

impl From<DesignError> for Failure {
    fn from(e: DesignError) -> Self {
        let field = e.field_name().map(str::to_string);
        match e {
            DesignError::EffectEqualsMargin { .. } | DesignError::WrongDirection { .. } => {
                Failure::new(StatusCode::UNPROCESSABLE_ENTITY, "effect_margin", e.to_string(), field)
            }
            _ => Failure::bad_request("invalid_design", e.to_string(), field),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Design(d) => d.into(),
            SimError::InvalidField { field, .. } => Failure::bad_request("invalid_scenario", e.to_string(), Some(field.into())),
            SimError::PopulationExhausted { .. } => {
                Failure::new(StatusCode::UNPROCESSABLE_ENTITY, "population_exhausted", e.to_string(), None)
            }
            _ => Failure::bad_request("invalid_scenario", e.to_string(), None),
        }
    }
}

/// JSON document with `schema_version` added at top level. Keys are sorted.
fn versioned<T: Serialize>(obj: &T) -> Response {
    let mut value = serde_json::to_value(obj).expect("response types serialize");
    if let Value::Object(map) = &mut value {
        map.insert("schema_version".into(), Value::String(SCHEMA_VERSION.into()));
    }
    axum::Json(value).into_response()
}

fn parse_value(body: &Bytes) -> Result<Value, Failure> {
    serde_json::from_slice(body).map_err(|e| Failure::bad_request("malformed_json", e.to_string(), None))
}

/// Deserializes, reporting the failing path as the error field.
fn from_value<T: DeserializeOwned>(mut value: Value) -> Result<T, Failure> {
    if let Value::Object(map) = &mut value {
        match map.remove("schema_version") {
            None => {}
            Some(Value::String(v)) if v == SCHEMA_VERSION => {}
            Some(other) => {
                return Err(Failure::bad_request(
                    "schema_version",
                    format!("unsupported schema_version {other} (expected \"1\")"),
                    Some("schema_version".into()),
                ))
            }
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != "." && !path.is_empty()).then_some(path);
        Failure::bad_request("invalid_request", e.inner().to_string(), field)
    })
}

fn parse_spec(value: Value) -> Result<DesignSpec, Failure> {
    let spec: DesignSpec = from_value(value)?;
    spec.validate()?;
    Ok(spec)
}

async fn health() -> Response {
    versioned(&serde_json::json!({ "status": "ok" }))
}

async fn design_handler(body: Bytes) -> Result<Response, Failure> {
    let spec = parse_spec(parse_value(&body)?)?;
    Ok(versioned(&design::plan(&spec, true)?))
}

async fn conventional_handler(body: Bytes) -> Result<Response, Failure> {
    let spec = parse_spec(parse_value(&body)?)?;
    Ok(versioned(&design::plan(&spec, false)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Sweep {
    field: String,
    values: Vec<f64>,
}

/// Body is a design spec with an extra `sweep` member, or `{"spec": ..., "sweep": ...}`.
async fn sensitivity_handler(body: Bytes) -> Result<Response, Failure> {
    let mut value = parse_value(&body)?;
    let map = value
        .as_object_mut()
        .ok_or_else(|| Failure::bad_request("invalid_request", "body must be a JSON object", None))?;
    let sweep = map.remove("sweep").ok_or_else(|| Failure::bad_request("invalid_request", "missing sweep", Some("sweep".into())))?;
    let spec_value = match map.remove("spec") {
        Some(nested) => nested,
        None => value,
    };
    let spec = parse_spec(spec_value)?;
    let sweep: Sweep = serde_json::from_value(sweep)
        .map_err(|e| Failure::bad_request("invalid_request", e.to_string(), Some("sweep".into())))?;
    let field = SweepField::parse(&sweep.field).ok_or_else(|| {
        Failure::bad_request("unsupported_sweep_field", format!("cannot sweep '{}'", sweep.field), Some("sweep.field".into()))
    })?;
    if sweep.values.is_empty() {
        return Err(Failure::bad_request("empty_sweep", "sweep.values is empty", Some("sweep.values".into())));
    }
    let points = design::sensitivity(&spec, field, &sweep.values)?;
    Ok(axum::Json(points).into_response())
}

async fn simulate_handler(body: Bytes) -> Result<Response, Failure> {
    let scenario: SimScenario = from_value(parse_value(&body)?)?;
    if scenario.replicates > MAX_API_REPLICATES {
        return Err(Failure::bad_request(
            "too_many_replicates",
            format!("at most {MAX_API_REPLICATES} replicates per request; use the command line for larger runs"),
            Some("replicates".into()),
        ));
    }
    let oc = tokio::task::spawn_blocking(move || simulator::operating_characteristics(&scenario, None))
        .await
        .map_err(|e| Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), None))??;
    Ok(versioned(&oc))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McNemarRequest {
    b: u64,
    c: u64,
    #[serde(default)]
    mode: Option<String>,
}

async fn mcnemar_handler(body: Bytes) -> Result<Response, Failure> {
    let req: McNemarRequest = from_value(parse_value(&body)?)?;
    let mode = match req.mode.as_deref() {
        None | Some("auto") => McNemarMode::Auto,
        Some("exact") => McNemarMode::Exact,
        Some("asymptotic") => McNemarMode::Asymptotic,
        Some(other) => {
            return Err(Failure::bad_request("invalid_request", format!("unknown mode '{other}'"), Some("mode".into())))
        }
    };
    let result = concordance::mcnemar_test(req.b, req.c, mode)
        .map_err(|e| Failure::bad_request("invalid_request", e.to_string(), None))?;
    Ok(versioned(&result))
}

async fn api_not_found() -> Failure {
    Failure::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint", None)
}

async fn method_not_allowed(method: Method) -> Failure {
    Failure::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", format!("{method} is not allowed on this path"), None)
}

/// API routes under `/api/v1`, plus static files from `static_dir` at `/`.
pub fn router(static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/design", post(design_handler))
        .route("/design/conventional", post(conventional_handler))
        .route("/design/sensitivity", post(sensitivity_handler))
        .route("/simulate", post(simulate_handler))
        .route("/concordance/mcnemar", post(mcnemar_handler))
        .fallback(api_not_found)
        .method_not_allowed_fallback(method_not_allowed);
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET, Method::POST]).allow_headers(Any);
    let app = Router::new().nest("/api/v1", api);
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(api_not_found),
    };
    app.layer(cors)
}
