mod common;

use std::sync::Arc;

use adapt_service::{router, Registry, ServiceOptions};
use axum::http::{Method, StatusCode};
use common::*;
use serde_json::json;

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let options = ServiceOptions {
        state_dir: Some(dir.path().to_path_buf()),
        ..ServiceOptions::default()
    };
    let first = app(options.clone());
    let id = create(&first, &payload(100, 21)).await;
    act(&first, &id, json!({"type": "step", "k": 5})).await;
    act(&first, &id, json!({"type": "set_family", "family": "gaussian"})).await;
    let done = create(&first, &payload(60, 22)).await;
    call(&first, Method::POST, &format!("/sessions/{done}/finalize"), Some(json!({"alpha": 0.3}))).await;
    let (_, s1) = call(&first, Method::GET, &format!("/sessions/{id}/state"), None).await;
    let (_, d1) = call(&first, Method::GET, &format!("/sessions/{done}/state"), None).await;

    let registry = Arc::new(Registry::new(options));
    assert_eq!(registry.recover().await.unwrap(), 2);
    let second = router(registry);
    let (status, s2) = call(&second, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s1, s2);
    let (_, d2) = call(&second, Method::GET, &format!("/sessions/{done}/state"), None).await;
    assert_eq!(d1, d2);
    // The restored session keeps accepting actions.
    let (status, s3) = act(&second, &id, json!({"type": "step"})).await;
    assert_eq!(status, StatusCode::OK, "{s3}");
    assert_eq!(s3["actions"], 3);
}
