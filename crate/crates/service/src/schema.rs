//! Wire types. Every request and response carries `schema: 1`.

use adapt_core::engine::Snapshot;
use adapt_core::{AdaptConfig, AdaptResult, FeaturePair, Family, HypothesisSet};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest accepted payload.
pub const MAX_HYPOTHESES: usize = 1_000_000;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

pub(crate) fn check_schema(schema: u32) -> Result<(), ApiError> {
    if schema == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(ApiError::invalid("schema", format!("unsupported schema {schema}, expected {SCHEMA_VERSION}")))
    }
}

/// P-values and one covariate row per hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPayload {
    pub pvalues: Vec<f64>,
    pub covariates: Vec<Vec<f64>>,
}

impl DataPayload {
    pub fn from_set(h: &HypothesisSet) -> Self {
        Self {
            pvalues: h.pvalues().to_vec(),
            covariates: (0..h.len()).map(|i| h.covariate(i).to_vec()).collect(),
        }
    }

    /// Validates field by field so errors point at the offending entry.
    pub fn to_set(&self, max: usize) -> Result<HypothesisSet, ApiError> {
        let n = self.pvalues.len();
        if n == 0 {
            return Err(ApiError::invalid("data.pvalues", "at least one hypothesis is required"));
        }
        if n > max {
            return Err(ApiError::too_large(n, max));
        }
        if self.covariates.len() != n {
            return Err(ApiError::invalid(
                "data.covariates",
                format!("{} rows for {n} p-values", self.covariates.len()),
            ));
        }
        if let Some(i) = self.pvalues.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(ApiError::invalid(
                format!("data.pvalues[{i}]"),
                format!("{} is outside [0, 1]", self.pvalues[i]),
            ));
        }
        let dim = self.covariates[0].len();
        for (i, row) in self.covariates.iter().enumerate() {
            if row.len() != dim {
                return Err(ApiError::invalid(
                    format!("data.covariates[{i}]"),
                    format!("{} columns, expected {dim}", row.len()),
                ));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(ApiError::invalid(format!("data.covariates[{i}][{j}]"), "not finite"));
            }
        }
        adapt_core::ingest(&self.pvalues, &self.covariates).map_err(|e| ApiError::invalid("data", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub data: DataPayload,
    #[serde(default)]
    pub config: AdaptConfig,
}

fn one() -> usize {
    1
}

/// Analyst steering actions. Each one only reads the masked view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    /// `k` threshold updates.
    Step {
        #[serde(default = "one")]
        k: usize,
    },
    /// Update until FDP-hat is at most `alpha` or nothing is masked.
    RunUntil { alpha: f64 },
    /// Refit the model now.
    Refit,
    /// Re-select among these candidates, e.g. `spline:6` or `intercept/spline:8`.
    SetFeaturization { candidates: Vec<String> },
    /// Switch family (`beta` or `gaussian`) and re-select.
    SetFamily { family: String },
    /// Stop. With `alpha`, first update until FDP-hat is at most `alpha`;
    /// without it, run to full unmasking and report q-values.
    Finalize {
        #[serde(default)]
        alpha: Option<f64>,
    },
}

fn check_alpha(path: &str, alpha: f64) -> Result<(), ApiError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(ApiError::invalid(path, format!("alpha = {alpha} must lie in (0, 1]")))
    }
}

impl Action {
    /// Checks arguments without touching any session.
    pub fn validate(&self) -> Result<(), ApiError> {
        match self {
            Action::Step { .. } | Action::Refit => Ok(()),
            Action::RunUntil { alpha } => check_alpha("action.alpha", *alpha),
            Action::Finalize { alpha } => alpha.map_or(Ok(()), |a| check_alpha("action.alpha", a)),
            Action::SetFeaturization { candidates } => self::parse_candidates(candidates).map(drop),
            Action::SetFamily { family } => self::parse_family(family).map(drop),
        }
    }
}

pub(crate) fn parse_candidates(candidates: &[String]) -> Result<Vec<FeaturePair>, ApiError> {
    if candidates.is_empty() {
        return Err(ApiError::invalid("action.candidates", "at least one candidate is required"));
    }
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| c.parse().map_err(|e: adapt_core::AdaptError| ApiError::invalid(format!("action.candidates[{i}]"), e.to_string())))
        .collect()
}

pub(crate) fn parse_family(family: &str) -> Result<Family, ApiError> {
    family
        .parse()
        .map_err(|e: adapt_core::AdaptError| ApiError::invalid("action.family", e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalizeRequest {
    #[serde(default = "schema_version")]
    pub schema: u32,
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Finalized,
}

/// Outcome of a finalized session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    pub alpha: Option<f64>,
    pub rejections: Vec<usize>,
    pub qvalues: Option<Vec<f64>>,
    /// Step at which the protocol stopped.
    pub t: usize,
    pub fdp_hat: f64,
}

impl FinalResult {
    pub fn from_result(r: &AdaptResult) -> Self {
        let last = r.trace.steps.last();
        Self {
            alpha: r.alpha,
            rejections: r.rejections.clone(),
            qvalues: r.qvalues.clone(),
            t: last.map_or(0, |s| s.t),
            fdp_hat: last.map_or(1.0, |s| s.fdp_hat),
        }
    }
}

/// Everything a client may read about a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub schema: u32,
    pub id: String,
    pub status: Status,
    /// Number of committed state transitions.
    pub seq: u64,
    /// Number of logged actions.
    pub actions: usize,
    pub snapshot: Snapshot,
    pub result: Option<FinalResult>,
}

/// Pushed over the stream after every state transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamEvent {
    /// Full snapshot.
    Snapshot { schema: u32, id: String, seq: u64, snapshot: Snapshot },
    /// Snapshot whose `entries` hold only hypotheses that changed since the
    /// event with sequence number `base`.
    Delta {
        schema: u32,
        id: String,
        seq: u64,
        base: u64,
        snapshot: Snapshot,
    },
    Finalized { schema: u32, id: String, seq: u64, result: FinalResult },
}

impl StreamEvent {
    pub fn seq(&self) -> u64 {
        match self {
            StreamEvent::Snapshot { seq, .. } | StreamEvent::Delta { seq, .. } | StreamEvent::Finalized { seq, .. } => *seq,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub schema: u32,
    pub id: String,
    pub state: SessionState,
}
