#![allow(dead_code)]

use std::sync::Arc;

use adapt_service::{router, DataPayload, Registry, ServiceOptions};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

/// `n` hypotheses on one covariate in [0, 1]; signal is dense above 0.6.
pub fn payload(n: usize, seed: u64) -> DataPayload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pvalues = Vec::with_capacity(n);
    let mut covariates = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random();
        let u: f64 = rng.random();
        let signal = x > 0.6 && rng.random::<f64>() < 0.7;
        pvalues.push(if signal { u.powi(6) } else { u });
        covariates.push(vec![x]);
    }
    DataPayload { pvalues, covariates }
}

pub fn small_config() -> Value {
    json!({
        "candidates": [
            {"pi": {"kind": "intercept"}, "mu": {"kind": "intercept"}},
            {"pi": {"kind": "natural_spline", "knots": 3}, "mu": {"kind": "natural_spline", "knots": 3}}
        ]
    })
}

pub fn create_body(data: &DataPayload) -> Value {
    json!({"schema": 1, "data": data, "config": small_config()})
}

pub fn app(options: ServiceOptions) -> Router {
    router(Arc::new(Registry::new(options)))
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn create(app: &Router, data: &DataPayload) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", Some(create_body(data))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

pub async fn act(app: &Router, id: &str, action: Value) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/sessions/{id}/actions"), Some(json!({"schema": 1, "action": action}))).await
}
