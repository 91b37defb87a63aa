//! HTTP and WebSocket endpoints.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::broadcast::error::RecvError;

use crate::error::ApiError;
use crate::schema::{check_schema, Action, ActionRequest, CreateSession, Created, FinalizeRequest, SCHEMA_VERSION};
use crate::session::{Encoded, Registry};

type App = Arc<Registry>;

pub fn router(registry: App) -> Router {
    let limit = registry.options().body_limit;
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/actions", post(act))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/stream", get(stream))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(registry)
}

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid("body", e.to_string()))
}

async fn create(State(app): State<App>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse(&body)?;
    let state = app.create(req).await?;
    let created = Created {
        schema: SCHEMA_VERSION,
        id: state.id.clone(),
        state: (*state).clone(),
    };
    Ok(json(StatusCode::CREATED, &created))
}

#[derive(Serialize)]
struct Listing {
    schema: u32,
    sessions: Vec<String>,
}

async fn list(State(app): State<App>) -> Response {
    json(
        StatusCode::OK,
        &Listing {
            schema: SCHEMA_VERSION,
            sessions: app.ids(),
        },
    )
}

async fn state(State(app): State<App>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(json(StatusCode::OK, &*app.get(&id)?.state()))
}

async fn act(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = app.get(&id)?;
    let req: ActionRequest = parse(&body)?;
    check_schema(req.schema)?;
    Ok(json(StatusCode::OK, &*session.act(req.action).await?))
}

async fn finalize(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = app.get(&id)?;
    let req: FinalizeRequest = if body.is_empty() {
        FinalizeRequest {
            schema: SCHEMA_VERSION,
            alpha: None,
        }
    } else {
        parse(&body)?
    };
    check_schema(req.schema)?;
    let state = session.act(Action::Finalize { alpha: req.alpha }).await?;
    Ok(json(StatusCode::OK, &*state))
}

async fn log(State(app): State<App>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let log = app.get(&id)?.log().await?;
    Ok(json(StatusCode::OK, &log))
}

async fn stream(State(app): State<App>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Result<Response, ApiError> {
    // Subscribe before the handshake completes so no event is missed.
    let rx = app.get(&id)?.subscribe();
    Ok(ws.on_upgrade(move |socket| pump(socket, rx)))
}

async fn pump(mut socket: WebSocket, mut rx: tokio::sync::broadcast::Receiver<Arc<Encoded>>) {
    loop {
        tokio::select! {
            event = rx.recv() => match event {
                Ok(ev) => {
                    if socket.send(Message::Text(ev.json.clone().into())).await.is_err() {
                        return;
                    }
                    if ev.finalized {
                        let _ = socket.send(Message::Close(Some(CloseFrame { code: 1000, reason: "finalized".into() }))).await;
                        return;
                    }
                }
                Err(RecvError::Lagged(k)) => {
                    // The client must resynchronize from the state endpoint.
                    let reason = format!("lagged by {k} events");
                    let _ = socket.send(Message::Close(Some(CloseFrame { code: 1008, reason: reason.into() }))).await;
                    return;
                }
                Err(RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
