use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use bridge_core::{design, io};
use bridge_service::{router, ApiError};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn spec_json(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

async fn send(app: axum::Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn post(uri: &str, body: &Value) -> (StatusCode, Value) {
    let (status, bytes) = send(router(None), "POST", uri, Some(body.to_string())).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn api_error(v: Value) -> ApiError {
    serde_json::from_value(v).expect("ApiError body")
}

#[tokio::test]
async fn health_reports_schema_version() {
    let (status, bytes) = send(router(None), "GET", "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v, json!({"status": "ok", "schema_version": "1"}));

    let (status, bytes) = send(router(None), "POST", "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(api_error(serde_json::from_slice(&bytes).unwrap()).code, "method_not_allowed");

    let (status, bytes) = send(router(None), "GET", "/api/v1/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(api_error(serde_json::from_slice(&bytes).unwrap()).code, "not_found");
}

#[tokio::test]
async fn design_matches_library() {
    let body = spec_json("breast_cancer.json");
    let (status, v) = post("/api/v1/design", &body).await;
    assert_eq!(status, StatusCode::OK);
    let spec = io::parse_versioned(&body.to_string()).unwrap();
    let lib = design::plan(&spec, true).unwrap();
    assert_eq!(v["n2"], lib.n2);
    assert_eq!(v["n2"], 20_392);
    assert_eq!(lib.reused(), 9503);
    assert_eq!(v["reuse_treat"].as_u64().unwrap() + v["reuse_control"].as_u64().unwrap(), 9503);
    assert_eq!(v["schema_version"], "1");

    let (status, v) = post("/api/v1/design/conventional", &body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["n2_prime"], 20_392);
}

#[tokio::test]
async fn design_errors_name_the_field() {
    let mut body = spec_json("breast_cancer.json");
    body["k2"] = json!(0);
    let (status, v) = post("/api/v1/design", &body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(api_error(v).field.as_deref(), Some("k2"));

    let (status, bytes) = send(router(None), "POST", "/api/v1/design", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(api_error(serde_json::from_slice(&bytes).unwrap()).code, "malformed_json");

    let mut body = spec_json("breast_cancer.json");
    body["alpha"] = json!("high");
    let (status, v) = post("/api/v1/design", &body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(api_error(v).field.as_deref(), Some("alpha"));

    let mut body = spec_json("breast_cancer.json");
    body["delta_margin"] = json!(0.006);
    let (status, v) = post("/api/v1/design", &body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(api_error(v).code, "effect_margin");
}

#[tokio::test]
async fn sensitivity_sweeps() {
    let mut body = spec_json("breast_cancer.json");
    body["legacy"]["n1"] = json!(1_000_000);
    body["sweep"] = json!({"field": "cr12", "values": [0.0, 0.466, 1.0]});
    let (status, v) = post("/api/v1/design/sensitivity", &body).await;
    assert_eq!(status, StatusCode::OK);
    let points = v.as_array().unwrap();
    assert_eq!(points[0]["n2_prime"], points[0]["n2"]);
    assert_eq!(points[1]["n2_prime"], 10_889);
    assert_eq!(points[2]["n2_prime"], 0);

    let nested = json!({"spec": spec_json("breast_cancer.json"), "sweep": {"field": "completion", "values": [0.0, 1.0]}});
    let (status, v) = post("/api/v1/design/sensitivity", &nested).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v[0]["savings"], 0.0);
    assert_eq!(v[1]["savings"], 2_851_500.0);

    body["sweep"] = json!({"field": "cr12", "values": []});
    let (status, v) = post("/api/v1/design/sensitivity", &body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(api_error(v).code, "empty_sweep");

    body["sweep"] = json!({"field": "alpha", "values": [0.05]});
    let (status, v) = post("/api/v1/design/sensitivity", &body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(api_error(v).field.as_deref(), Some("sweep.field"));
}

#[tokio::test]
async fn simulate_limits_and_runs() {
    let mut body = spec_json("power_scenario.json");
    let (status, v) = post("/api/v1/simulate", &body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(api_error(v).field.as_deref(), Some("replicates"));

    body["replicates"] = json!(50);
    let (status, v) = post("/api/v1/simulate", &body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["replicates"], 50);
    assert_eq!(v["schema_version"], "1");
}

#[tokio::test]
async fn mcnemar_endpoint() {
    let (status, v) = post("/api/v1/concordance/mcnemar", &json!({"b": 3, "c": 12, "mode": "exact"})).await;
    assert_eq!(status, StatusCode::OK);
    let p = v["p_value"].as_f64().unwrap();
    assert!((p - 0.03515625).abs() < 1e-12, "{p}");
    let (status, v) = post("/api/v1/concordance/mcnemar", &json!({"b": 3, "c": 12, "mode": "magic"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(api_error(v).field.as_deref(), Some("mode"));
}

#[tokio::test]
async fn static_files_are_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>bridge</h1>").unwrap();
    let app = router(Some(dir.path().to_path_buf()));
    let (status, bytes) = send(app.clone(), "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, b"<h1>bridge</h1>");
    let (status, _) = send(app, "GET", "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
}
