//! Session registry. Each session has one worker that applies actions in
//! arrival order; reads go through an atomically swapped state.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use adapt_core::engine::Snapshot;
use adapt_core::Engine;
use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot};

use crate::error::ApiError;
use crate::replay::{apply, replay_with, ActionLog};
use crate::schema::{check_schema, Action, CreateSession, FinalResult, SessionState, Status, StreamEvent, MAX_HYPOTHESES, SCHEMA_VERSION};

/// Sessions above this many hypotheses stream deltas instead of full snapshots.
pub const DELTA_THRESHOLD: usize = 100_000;

const EVENT_CAPACITY: usize = 4096;
const QUEUE_CAPACITY: usize = 256;

#[derive(Clone, Debug)]
pub struct ServiceOptions {
    pub max_hypotheses: usize,
    pub delta_threshold: usize,
    /// Directory holding one action log per session; sessions found there
    /// are replayed on startup.
    pub state_dir: Option<PathBuf>,
    pub body_limit: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            max_hypotheses: MAX_HYPOTHESES,
            delta_threshold: DELTA_THRESHOLD,
            state_dir: None,
            body_limit: 1 << 30,
        }
    }
}

/// A serialized stream event.
#[derive(Debug)]
pub struct Encoded {
    pub seq: u64,
    pub finalized: bool,
    pub json: String,
}

#[derive(Serialize, Deserialize)]
struct Persisted {
    schema: u32,
    id: String,
    log: ActionLog,
}

enum Command {
    Act(Action, oneshot::Sender<Result<Arc<SessionState>, ApiError>>),
    Log(oneshot::Sender<ActionLog>),
}

pub struct Session {
    id: String,
    state: Arc<ArcSwap<SessionState>>,
    events: broadcast::Sender<Arc<Encoded>>,
    commands: mpsc::Sender<Command>,
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Latest committed state.
    pub fn state(&self) -> Arc<SessionState> {
        self.state.load_full()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<Encoded>> {
        self.events.subscribe()
    }

    pub async fn act(&self, action: Action) -> Result<Arc<SessionState>, ApiError> {
        action.validate()?;
        let (tx, rx) = oneshot::channel();
        self.commands
            .send(Command::Act(action, tx))
            .await
            .map_err(|_| ApiError::internal("session worker stopped"))?;
        rx.await.map_err(|_| ApiError::internal("session worker stopped"))?
    }

    pub async fn log(&self) -> Result<ActionLog, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.commands
            .send(Command::Log(tx))
            .await
            .map_err(|_| ApiError::internal("session worker stopped"))?;
        rx.await.map_err(|_| ApiError::internal("session worker stopped"))
    }
}

/// Numbers transitions and publishes them to subscribers.
struct Emitter {
    id: String,
    seq: u64,
    events: broadcast::Sender<Arc<Encoded>>,
    delta_threshold: usize,
    /// Snapshot at `seq`, kept only for delta encoding.
    last: Option<Snapshot>,
}

impl Emitter {
    fn send(&self, event: &StreamEvent, finalized: bool) {
        if self.events.receiver_count() == 0 {
            return;
        }
        let json = serde_json::to_string(event).expect("events serialize");
        let _ = self.events.send(Arc::new(Encoded {
            seq: self.seq,
            finalized,
            json,
        }));
    }

    fn transition(&mut self, e: &Engine) {
        self.seq += 1;
        let delta = e.len() > self.delta_threshold;
        if !delta && self.events.receiver_count() == 0 {
            return;
        }
        let snapshot = e.snapshot();
        let event = match (&self.last, delta) {
            (Some(prev), true) => {
                let mut changed = snapshot.clone();
                changed.entries.retain(|en| prev.entries.get(en.index) != Some(en));
                StreamEvent::Delta {
                    schema: SCHEMA_VERSION,
                    id: self.id.clone(),
                    seq: self.seq,
                    base: self.seq - 1,
                    snapshot: changed,
                }
            }
            _ => StreamEvent::Snapshot {
                schema: SCHEMA_VERSION,
                id: self.id.clone(),
                seq: self.seq,
                snapshot: snapshot.clone(),
            },
        };
        self.send(&event, false);
        if delta {
            self.last = Some(snapshot);
        }
    }
}

struct Worker {
    engine: Option<Engine>,
    log: ActionLog,
    emitter: Emitter,
    state: Arc<ArcSwap<SessionState>>,
    persist: Option<PathBuf>,
}

impl Worker {
    fn handle(&mut self, action: Action) -> Result<Arc<SessionState>, ApiError> {
        action.validate()?;
        if self.engine.is_none() {
            return Err(ApiError::finalized());
        }
        self.log.actions.push(action.clone());
        let emitter = &mut self.emitter;
        let outcome = apply(&mut self.engine, &action, &mut |e| emitter.transition(e));
        let prev = self.state.load_full();
        let next = match (&outcome, &self.engine) {
            (Ok(Some((snapshot, result))), _) => {
                self.emitter.seq += 1;
                let result = FinalResult::from_result(result);
                self.emitter.send(
                    &StreamEvent::Finalized {
                        schema: SCHEMA_VERSION,
                        id: self.emitter.id.clone(),
                        seq: self.emitter.seq,
                        result: result.clone(),
                    },
                    true,
                );
                SessionState {
                    status: Status::Finalized,
                    snapshot: snapshot.clone(),
                    result: Some(result),
                    ..self.base(&prev)
                }
            }
            (_, Some(engine)) => SessionState {
                snapshot: engine.snapshot(),
                ..self.base(&prev)
            },
            // Finalize failed after consuming the engine.
            (_, None) => SessionState {
                status: Status::Finalized,
                ..self.base(&prev)
            },
        };
        let next = Arc::new(next);
        self.state.store(next.clone());
        self.save();
        outcome.map(|_| next)
    }

    fn base(&self, prev: &SessionState) -> SessionState {
        SessionState {
            seq: self.emitter.seq,
            actions: self.log.actions.len(),
            ..prev.clone()
        }
    }

    fn save(&self) {
        let Some(dir) = &self.persist else { return };
        let record = Persisted {
            schema: SCHEMA_VERSION,
            id: self.emitter.id.clone(),
            log: self.log.clone(),
        };
        if let Err(e) = write_atomic(&dir.join(format!("{}.json", self.emitter.id)), &record) {
            eprintln!("adapt-service: cannot persist session {}: {e}", self.emitter.id);
        }
    }
}

fn write_atomic(path: &Path, record: &Persisted) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec(record)?)?;
    std::fs::rename(tmp, path)
}

async fn run_worker(mut worker: Worker, mut rx: mpsc::Receiver<Command>) {
    while let Some(cmd) = rx.recv().await {
        match cmd {
            Command::Log(reply) => {
                let _ = reply.send(worker.log.clone());
            }
            Command::Act(action, reply) => {
                let joined = tokio::task::spawn_blocking(move || {
                    let res = worker.handle(action);
                    (worker, res)
                })
                .await;
                match joined {
                    Ok((w, res)) => {
                        worker = w;
                        let _ = reply.send(res);
                    }
                    Err(e) => {
                        let _ = reply.send(Err(ApiError::internal(format!("session worker failed: {e}"))));
                        return;
                    }
                }
            }
        }
    }
}

/// All live sessions.
pub struct Registry {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    options: ServiceOptions,
}

impl Registry {
    pub fn new(options: ServiceOptions) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            options,
        }
    }

    pub fn options(&self) -> &ServiceOptions {
        &self.options
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("registry lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub async fn create(&self, req: CreateSession) -> Result<Arc<SessionState>, ApiError> {
        check_schema(req.schema)?;
        let h = req.data.to_set(self.options.max_hypotheses)?;
        req.config.validate().map_err(|e| ApiError::invalid("config", e.to_string()))?;
        let log = ActionLog::new(req.data, req.config);
        let id = uuid::Uuid::new_v4().simple().to_string();
        let config = log.config.clone();
        let engine = tokio::task::spawn_blocking(move || Engine::new(h, config))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(ApiError::engine)?;
        let snapshot = engine.snapshot();
        let state = SessionState {
            schema: SCHEMA_VERSION,
            id: id.clone(),
            status: Status::Active,
            seq: 0,
            actions: 0,
            snapshot,
            result: None,
        };
        Ok(self.install(id, Some(engine), log, state, 0))
    }

    fn install(&self, id: String, engine: Option<Engine>, log: ActionLog, state: SessionState, seq: u64) -> Arc<SessionState> {
        let n = state.snapshot.n;
        let delta = n > self.options.delta_threshold;
        let (events, _) = broadcast::channel(EVENT_CAPACITY);
        let (tx, rx) = mpsc::channel(QUEUE_CAPACITY);
        let state = Arc::new(state);
        let shared = Arc::new(ArcSwap::new(state.clone()));
        let worker = Worker {
            engine,
            log,
            emitter: Emitter {
                id: id.clone(),
                seq,
                events: events.clone(),
                delta_threshold: self.options.delta_threshold,
                last: delta.then(|| state.snapshot.clone()),
            },
            state: shared.clone(),
            persist: self.options.state_dir.clone(),
        };
        worker.save();
        tokio::spawn(run_worker(worker, rx));
        let session = Arc::new(Session {
            id: id.clone(),
            state: shared,
            events,
            commands: tx,
        });
        self.sessions.write().expect("registry lock").insert(id, session);
        state
    }

    /// Replays every persisted session in the state directory. Returns the
    /// number restored.
    pub async fn recover(&self) -> std::io::Result<usize> {
        let Some(dir) = self.options.state_dir.clone() else { return Ok(0) };
        std::fs::create_dir_all(&dir)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut restored = 0;
        for path in paths {
            let record: Persisted = match std::fs::read(&path).map_err(|e| e.to_string()).and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string())) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("adapt-service: skipping {}: {e}", path.display());
                    continue;
                }
            };
            let log = record.log.clone();
            let replayed = match tokio::task::spawn_blocking(move || replay_with(&log, &mut |_| {})).await {
                Ok(Ok(r)) => r,
                Ok(Err(e)) => {
                    eprintln!("adapt-service: cannot replay {}: {e}", path.display());
                    continue;
                }
                Err(e) => {
                    eprintln!("adapt-service: cannot replay {}: {e}", path.display());
                    continue;
                }
            };
            let state = SessionState {
                schema: SCHEMA_VERSION,
                id: record.id.clone(),
                status: if replayed.engine.is_some() { Status::Active } else { Status::Finalized },
                seq: replayed.seq,
                actions: record.log.actions.len(),
                snapshot: replayed.snapshot.clone(),
                result: replayed.final_result(),
            };
            self.install(record.id, replayed.engine, record.log, state, replayed.seq);
            restored += 1;
        }
        Ok(restored)
    }
}
