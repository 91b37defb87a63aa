//! Session server for interactive adaptive testing.
//!
//! A session wraps one [`adapt_core::Engine`]. Clients create it with data
//! and a configuration, steer it with actions, read its state and subscribe
//! to a stream of snapshots. Every accepted action is logged, and a log
//! replays to the same state.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | [`CreateSession`] |
//! | GET | `/sessions/{id}/state` | |
//! | POST | `/sessions/{id}/actions` | [`ActionRequest`] |
//! | POST | `/sessions/{id}/finalize` | [`FinalizeRequest`] |
//! | GET | `/sessions/{id}/log` | |
//! | GET (WebSocket) | `/sessions/{id}/stream` | |

pub mod error;
pub mod replay;
pub mod routes;
pub mod schema;
pub mod session;

use std::net::SocketAddr;
use std::sync::Arc;

pub use error::{ApiError, ErrorCode};
pub use replay::{replay, ActionLog, Replayed};
pub use routes::router;
pub use schema::{
    Action, ActionRequest, CreateSession, Created, DataPayload, FinalResult, FinalizeRequest, SessionState, Status,
    StreamEvent, MAX_HYPOTHESES, SCHEMA_VERSION,
};
pub use session::{Registry, ServiceOptions, DELTA_THRESHOLD};

/// Restores persisted sessions and serves until the listener fails.
pub async fn serve(addr: SocketAddr, options: ServiceOptions) -> std::io::Result<()> {
    let registry = Arc::new(Registry::new(options));
    let restored = registry.recover().await?;
    if restored > 0 {
        eprintln!("adapt-service: restored {restored} sessions");
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("adapt-service: listening on {}", listener.local_addr()?);
    axum::serve(listener, router(registry)).await
}
