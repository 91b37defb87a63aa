mod common;

use adapt_service::ServiceOptions;
use axum::http::{Method, StatusCode};
use common::*;
use serde_json::{json, Value};

#[tokio::test]
async fn create_and_read_state() {
    let app = app(ServiceOptions::default());
    let data = payload(100, 1);
    let id = create(&app, &data).await;
    let (status, state) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(state["schema"], 1);
    assert_eq!(state["status"], "active");
    assert_eq!(state["seq"], 0);
    assert_eq!(state["snapshot"]["n"], 100);
    assert_eq!(state["snapshot"]["t"], 0);
    let entries = state["snapshot"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 100);
    // Masked entries expose p' only.
    for (e, &p) in entries.iter().zip(&data.pvalues) {
        if e["masked"].as_bool().unwrap() {
            assert_eq!(e["value"].as_f64().unwrap(), adapt_core::mirror_min(p));
        }
    }
}

#[tokio::test]
async fn ids_are_distinct() {
    let app = app(ServiceOptions::default());
    let data = payload(50, 2);
    let a = create(&app, &data).await;
    let b = create(&app, &data).await;
    assert_ne!(a, b);
    let (_, list) = call(&app, Method::GET, "/sessions", None).await;
    assert_eq!(list["sessions"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn invalid_payloads_are_rejected_with_paths() {
    let app = app(ServiceOptions {
        max_hypotheses: 10,
        ..ServiceOptions::default()
    });
    let cases = [
        (json!({"data": {"pvalues": [], "covariates": []}}), StatusCode::UNPROCESSABLE_ENTITY, "data.pvalues"),
        (json!({"data": {"pvalues": [0.1, 1.5], "covariates": [[0.0], [1.0]]}}), StatusCode::UNPROCESSABLE_ENTITY, "data.pvalues[1]"),
        (json!({"data": {"pvalues": [0.1, 0.5], "covariates": [[0.0], [1.0, 2.0]]}}), StatusCode::UNPROCESSABLE_ENTITY, "data.covariates[1]"),
        (json!({"data": {"pvalues": [0.1], "covariates": []}}), StatusCode::UNPROCESSABLE_ENTITY, "data.covariates"),
        (json!({"schema": 2, "data": {"pvalues": [0.1], "covariates": [[0.0]]}}), StatusCode::UNPROCESSABLE_ENTITY, "schema"),
        (json!({"data": {"pvalues": [0.5]}}), StatusCode::UNPROCESSABLE_ENTITY, "body"),
        (json!({"data": {"pvalues": vec![0.5; 11], "covariates": vec![[0.0]; 11]}}), StatusCode::PAYLOAD_TOO_LARGE, "data.pvalues"),
        (json!({"data": {"pvalues": [0.1], "covariates": [[0.0]]}, "config": {"s0": 0.9}}), StatusCode::UNPROCESSABLE_ENTITY, "config"),
    ];
    for (body, status, path) in cases {
        let (got, err) = call(&app, Method::POST, "/sessions", Some(body.clone())).await;
        assert_eq!(got, status, "{body} -> {err}");
        assert_eq!(err["schema"], 1);
        assert_eq!(err["error"]["path"], path, "{body} -> {err}");
    }
    let (_, list) = call(&app, Method::GET, "/sessions", None).await;
    assert!(list["sessions"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn unknown_session_is_404() {
    let app = app(ServiceOptions::default());
    let (status, err) = call(&app, Method::GET, "/sessions/nope/state", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"]["code"], "not_found");
    let (status, _) = act(&app, "nope", json!({"type": "refit"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

fn masked_lfdr(state: &Value) -> Vec<(usize, f64)> {
    state["snapshot"]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["masked"].as_bool().unwrap())
        .map(|e| (e["index"].as_u64().unwrap() as usize, e["lfdr"].as_f64().unwrap()))
        .collect()
}

#[tokio::test]
async fn step_reveals_largest_lfdr() {
    let app = app(ServiceOptions::default());
    let id = create(&app, &payload(100, 3)).await;
    let (_, before) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    let masked = masked_lfdr(&before);
    let top = masked.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    let (status, after) = act(&app, &id, json!({"type": "step", "k": 1})).await;
    assert_eq!(status, StatusCode::OK, "{after}");
    assert_eq!(after["seq"], 1);
    assert_eq!(after["actions"], 1);
    assert_eq!(after["snapshot"]["t"], 1);
    let revealed: Vec<usize> = after["snapshot"]["last_revealed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();
    assert!(!revealed.is_empty());
    for i in &revealed {
        let l = masked.iter().find(|m| m.0 == *i).expect("was masked").1;
        assert!(l >= top - 1e-9, "revealed lfdr {l} below max {top}");
    }
    let argmax = masked.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    assert!(revealed.contains(&argmax));
    let entries = after["snapshot"]["entries"].as_array().unwrap();
    for i in &revealed {
        assert!(!entries[*i]["masked"].as_bool().unwrap());
    }
}

#[tokio::test]
async fn run_until_reaches_level_or_exhausts() {
    let app = app(ServiceOptions::default());
    let id = create(&app, &payload(200, 4)).await;
    let (status, state) = act(&app, &id, json!({"type": "run_until", "alpha": 0.1})).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    let snap = &state["snapshot"];
    let fdp = snap["fdp_hat"].as_f64().unwrap();
    assert!(fdp <= 0.1 || snap["masked_count"] == 0, "{fdp}");
    let history = snap["fdp_history"].as_array().unwrap();
    assert_eq!(history.len(), snap["t"].as_u64().unwrap() as usize + 1);
    // Stopped at the first step at or below the level.
    for h in &history[..history.len() - 1] {
        assert!(h.as_f64().unwrap() > 0.1);
    }
}

#[tokio::test]
async fn bad_actions_are_rejected_without_logging() {
    let app = app(ServiceOptions::default());
    let id = create(&app, &payload(80, 5)).await;
    let bad = [
        (json!({"type": "set_featurization", "candidates": ["radial:3"]}), "action.candidates[0]"),
        (json!({"type": "set_featurization", "candidates": []}), "action.candidates"),
        (json!({"type": "set_family", "family": "poisson"}), "action.family"),
        (json!({"type": "run_until", "alpha": 0.0}), "action.alpha"),
        (json!({"type": "jump"}), "body"),
    ];
    for (action, path) in bad {
        let (status, err) = act(&app, &id, action.clone()).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{action}");
        assert_eq!(err["error"]["path"], path, "{action} -> {err}");
    }
    let (_, state) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state["actions"], 0);
    assert_eq!(state["seq"], 0);
}

#[tokio::test]
async fn steering_actions_update_the_model() {
    let app = app(ServiceOptions::default());
    let id = create(&app, &payload(150, 6)).await;
    let (status, state) = act(&app, &id, json!({"type": "set_featurization", "candidates": ["spline:4/intercept"]})).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(state["snapshot"]["pair"]["pi"]["kind"], "natural_spline");
    assert_eq!(state["snapshot"]["pair"]["mu"]["kind"], "intercept");
    let (status, state) = act(&app, &id, json!({"type": "set_family", "family": "gaussian"})).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(state["snapshot"]["family"], "gaussian");
    let (status, state) = act(&app, &id, json!({"type": "refit"})).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(state["seq"], 3);
    assert_eq!(state["snapshot"]["t"], 0);
}

#[tokio::test]
async fn finalize_reports_rejections_and_locks_session() {
    let app = app(ServiceOptions::default());
    let data = payload(150, 7);
    let id = create(&app, &data).await;
    let uri = format!("/sessions/{id}/finalize");
    let (status, state) = call(&app, Method::POST, &uri, Some(json!({"schema": 1, "alpha": 0.2}))).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    assert_eq!(state["status"], "finalized");
    let result = &state["result"];
    assert_eq!(result["alpha"], 0.2);
    let rejected: Vec<usize> = result["rejections"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
    let snap = &state["snapshot"];
    if snap["fdp_hat"].as_f64().unwrap() <= 0.2 {
        assert_eq!(rejected.len(), snap["r"].as_u64().unwrap() as usize);
        for i in &rejected {
            assert!(data.pvalues[*i] <= 0.5);
            assert!(snap["entries"][*i]["masked"].as_bool().unwrap());
        }
    } else {
        assert!(rejected.is_empty());
    }
    for action in [json!({"type": "step"}), json!({"type": "refit"}), json!({"type": "finalize"})] {
        let (status, err) = act(&app, &id, action).await;
        assert_eq!(status, StatusCode::CONFLICT);
        assert_eq!(err["error"]["code"], "finalized");
    }
    let (status, _) = call(&app, Method::POST, &uri, None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn finalize_without_level_gives_qvalues() {
    let app = app(ServiceOptions::default());
    let id = create(&app, &payload(100, 8)).await;
    let (status, state) = call(&app, Method::POST, &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK, "{state}");
    let q = state["result"]["qvalues"].as_array().unwrap();
    assert_eq!(q.len(), 100);
    assert!(q.iter().all(|v| (0.0..=1.0).contains(&v.as_f64().unwrap())));
    assert_eq!(state["snapshot"]["masked_count"], 0);
}

#[tokio::test]
async fn log_replays_to_the_same_state() {
    let app = app(ServiceOptions::default());
    let id = create(&app, &payload(120, 9)).await;
    for action in [
        json!({"type": "step", "k": 4}),
        json!({"type": "set_family", "family": "gaussian"}),
        json!({"type": "set_featurization", "candidates": ["bad"]}),
        json!({"type": "step", "k": 3}),
        json!({"type": "refit"}),
        json!({"type": "run_until", "alpha": 0.3}),
    ] {
        act(&app, &id, action).await;
    }
    let (_, state) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    let (status, log) = call(&app, Method::GET, &format!("/sessions/{id}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(log["actions"].as_array().unwrap().len(), 5);
    let log: adapt_service::ActionLog = serde_json::from_value(log).unwrap();
    let replayed = adapt_service::replay(&log).unwrap();
    assert_eq!(serde_json::to_value(&replayed.snapshot).unwrap(), state["snapshot"]);
    assert_eq!(replayed.seq, state["seq"].as_u64().unwrap());
    // Replaying the log into a fresh session over HTTP agrees too.
    let id2 = {
        let (_, body) = call(&app, Method::POST, "/sessions", Some(json!({"data": log.data, "config": log.config}))).await;
        body["id"].as_str().unwrap().to_string()
    };
    for a in &log.actions {
        act(&app, &id2, serde_json::to_value(a).unwrap()).await;
    }
    let (_, state2) = call(&app, Method::GET, &format!("/sessions/{id2}/state"), None).await;
    assert_eq!(state2["snapshot"], state["snapshot"]);
}
