//! The analyst-visible state of an engine.

use serde::{Deserialize, Serialize};

use super::{Engine, StrategyKind};
use crate::em::FeaturePair;
use crate::expfam::Family;
use crate::glm::CandidateScore;
use crate::threshold::LfdrProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub x: Vec<f64>,
    pub masked: bool,
    /// `p` when revealed, `p' = min(p, 1 - p)` when masked.
    pub value: f64,
    pub threshold: f64,
    /// Estimated local FDR at `value`.
    pub lfdr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub pi1: Vec<f64>,
    pub mu: Vec<f64>,
    pub expected_loglik: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pi_lambda: Option<f64>,
    pub mu_lambda: Option<f64>,
}

/// Everything the analyst may see at one step. For masked hypotheses it
/// holds only the covariate and `p'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub n: usize,
    pub a: usize,
    pub r: usize,
    pub fdp_hat: f64,
    pub fdp_history: Vec<f64>,
    pub masked_count: usize,
    pub terminal: bool,
    pub family: Family,
    pub strategy: StrategyKind,
    pub pair: FeaturePair,
    pub refits: usize,
    /// Hypotheses revealed by the latest update.
    pub last_revealed: Vec<usize>,
    pub selection: Vec<CandidateScore>,
    pub selection_fallback: bool,
    pub fit: FitSummary,
    pub entries: Vec<SnapshotEntry>,
}

impl Snapshot {
    pub(super) fn build(e: &Engine) -> Self {
        let m = &e.mask;
        let lfdr = LfdrProfile::new(&e.fit, m).lfdr;
        let entries = (0..m.len())
            .map(|i| SnapshotEntry {
                index: i,
                x: e.h.covariate(i).to_vec(),
                masked: m.is_masked(i),
                value: m.observed()[i],
                threshold: m.surface().get(i),
                lfdr: lfdr[i],
            })
            .collect();
        let t = e.t();
        Self {
            t,
            n: m.len(),
            a: m.a(),
            r: m.r(),
            fdp_hat: m.fdp_hat(),
            fdp_history: e.trace.fdp_hat(),
            masked_count: m.masked_count(),
            terminal: e.is_terminal(),
            family: e.config.family,
            strategy: e.config.strategy,
            pair: e.pair.clone(),
            refits: e.refits,
            last_revealed: t
                .checked_sub(1)
                .map(|p| e.trace.steps[p].revealed.clone())
                .unwrap_or_default(),
            selection: e.selection.clone(),
            selection_fallback: e.selection_fallback,
            fit: FitSummary {
                pi1: e.fit.pi1.clone(),
                mu: e.fit.mu.clone(),
                expected_loglik: e.fit.expected_loglik,
                loglik: e.fit.loglik,
                iterations: e.fit.iterations,
                converged: e.fit.converged,
                pi_lambda: e.fit.pi_lambda,
                mu_lambda: e.fit.mu_lambda,
            },
            entries,
        }
    }
}
