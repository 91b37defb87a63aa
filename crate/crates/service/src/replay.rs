//! The action log and deterministic replay. Workers and replay share
//! [`apply`], so replaying a log reproduces the session step for step.

use adapt_core::engine::Snapshot;
use adapt_core::{AdaptConfig, AdaptResult, Engine};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::schema::{check_schema, parse_candidates, parse_family, Action, DataPayload, FinalResult, MAX_HYPOTHESES, SCHEMA_VERSION};

/// Input data, configuration and every accepted action, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionLog {
    pub schema: u32,
    pub data: DataPayload,
    pub config: AdaptConfig,
    pub actions: Vec<Action>,
}

impl ActionLog {
    pub fn new(data: DataPayload, config: AdaptConfig) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            data,
            config,
            actions: Vec::new(),
        }
    }
}

/// Applies one action. `on_step` sees the engine after every state
/// transition. A finalize action consumes the engine and returns the last
/// snapshot with the result.
pub(crate) fn apply(
    slot: &mut Option<Engine>,
    action: &Action,
    on_step: &mut dyn FnMut(&Engine),
) -> Result<Option<(Snapshot, AdaptResult)>, ApiError> {
    let engine = slot.as_mut().ok_or_else(ApiError::finalized)?;
    let eng = ApiError::engine;
    match action {
        Action::Step { k } => {
            for _ in 0..*k {
                if !engine.step().map_err(eng)? {
                    break;
                }
                on_step(engine);
            }
        }
        Action::RunUntil { alpha } => {
            while engine.fdp_hat() > *alpha && engine.step().map_err(eng)? {
                on_step(engine);
            }
        }
        Action::Refit => {
            engine.refit().map_err(eng)?;
            on_step(engine);
        }
        Action::SetFeaturization { candidates } => {
            engine.set_featurization(parse_candidates(candidates)?).map_err(eng)?;
            on_step(engine);
        }
        Action::SetFamily { family } => {
            engine.set_family(parse_family(family)?).map_err(eng)?;
            on_step(engine);
        }
        Action::Finalize { alpha } => {
            let done = |e: &Engine| alpha.is_some_and(|a| e.fdp_hat() <= a);
            while !done(engine) && engine.step().map_err(eng)? {
                on_step(engine);
            }
            let snapshot = engine.snapshot();
            let engine = slot.take().expect("checked above");
            let result = engine.finalize(*alpha).map_err(eng)?;
            return Ok(Some((snapshot, result)));
        }
    }
    Ok(None)
}

/// Final state of a replayed log.
pub struct Replayed {
    pub snapshot: Snapshot,
    /// Number of state transitions, matching the session's `seq`.
    pub seq: u64,
    pub result: Option<AdaptResult>,
    /// Positions of actions that returned an error, with the error.
    pub failed: Vec<(usize, ApiError)>,
    pub(crate) engine: Option<Engine>,
}

impl std::fmt::Debug for Replayed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Replayed")
            .field("seq", &self.seq)
            .field("t", &self.snapshot.t)
            .field("finalized", &self.result.is_some())
            .field("failed", &self.failed)
            .finish_non_exhaustive()
    }
}

impl Replayed {
    pub fn final_result(&self) -> Option<FinalResult> {
        self.result.as_ref().map(FinalResult::from_result)
    }
}

/// Rebuilds a session from its log. Actions that failed originally fail
/// again at the same point and are skipped the same way.
pub fn replay(log: &ActionLog) -> Result<Replayed, ApiError> {
    replay_with(log, &mut |_| {})
}

pub(crate) fn replay_with(log: &ActionLog, on_step: &mut dyn FnMut(&Engine)) -> Result<Replayed, ApiError> {
    check_schema(log.schema)?;
    let h = log.data.to_set(MAX_HYPOTHESES)?;
    let engine = Engine::new(h, log.config.clone()).map_err(ApiError::engine)?;
    let mut snapshot = engine.snapshot();
    let mut slot = Some(engine);
    let mut seq = 0u64;
    let mut result = None;
    let mut failed = Vec::new();
    for (i, action) in log.actions.iter().enumerate() {
        let mut count = |e: &Engine| {
            seq += 1;
            on_step(e);
        };
        match apply(&mut slot, action, &mut count) {
            Ok(Some((snap, res))) => {
                snapshot = snap;
                result = Some(res);
            }
            Ok(None) => {}
            Err(e) => failed.push((i, e)),
        }
    }
    if let Some(e) = &slot {
        snapshot = e.snapshot();
    }
    if result.is_some() {
        seq += 1;
    }
    Ok(Replayed {
        snapshot,
        seq,
        result,
        failed,
        engine: slot,
    })
}
