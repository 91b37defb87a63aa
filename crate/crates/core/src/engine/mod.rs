//! The protocol driver.
//!
//! An [`Engine`] owns the full data and exposes only what the analyst may
//! see. Each update shrinks the threshold surface through an [`Updater`] that
//! receives nothing but the masked view and the current model fit, so the
//! run is a legal sequence of updates whatever strategy is plugged in.

mod infoloss;
mod snapshot;
mod trace;

use serde::{Deserialize, Serialize};

use crate::data::HypothesisSet;
use crate::em::{run_em, Designs, EmConfig, FeaturePair, Penalty, TwoGroupsFit, PI_EPS};
use crate::error::{AdaptError, Result};
use crate::expfam::Family;
use crate::glm::{select_featurization, CandidateScore, Featurization, SelectionCriterion};
use crate::masking::{mask, next_below, MaskState, ThresholdSurface};
use crate::threshold::{reveal_one_update, LfdrProfile};

pub use infoloss::{info_loss_correlation, pearson, InfoLossPoint};
pub use snapshot::{FitSummary, Snapshot, SnapshotEntry};
pub use trace::{moving_window_fdp, q_values, ProtocolTrace, Step};

/// How often the two-groups model is refitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitCadence {
    /// Every `ceil(n / 20)` revealed hypotheses.
    #[default]
    Auto,
    /// Every `k` revealed hypotheses.
    Every(usize),
    /// Only at the start.
    Never,
}

impl RefitCadence {
    pub fn reveals(self, n: usize) -> usize {
        match self {
            RefitCadence::Auto => n.div_ceil(20).max(1),
            RefitCadence::Every(k) => k.max(1),
            RefitCadence::Never => usize::MAX,
        }
    }
}

/// Threshold-update strategies shipped with the engine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Reveal the masked hypothesis with the largest estimated local FDR.
    #[default]
    RevealOne,
    /// Keep the surface constant and lower it past the largest masked `p'`.
    ConstantThreshold,
}

impl StrategyKind {
    pub fn build(self) -> Box<dyn Updater> {
        match self {
            StrategyKind::RevealOne => Box::new(RevealOne),
            StrategyKind::ConstantThreshold => Box::new(ConstantThreshold),
        }
    }

    fn needs_model(self) -> bool {
        self == StrategyKind::RevealOne
    }
}

/// A threshold update rule. It sees only the masked view and the fit.
pub trait Updater: Send + Sync {
    fn name(&self) -> &'static str;
    fn propose(&mut self, mask: &MaskState, fit: &TwoGroupsFit) -> Result<ThresholdSurface>;
}

pub struct RevealOne;

impl Updater for RevealOne {
    fn name(&self) -> &'static str {
        "reveal_one"
    }

    fn propose(&mut self, mask: &MaskState, fit: &TwoGroupsFit) -> Result<ThresholdSurface> {
        Ok(reveal_one_update(mask.surface(), fit, mask)?.surface)
    }
}

pub struct ConstantThreshold;

impl Updater for ConstantThreshold {
    fn name(&self) -> &'static str {
        "constant_threshold"
    }

    fn propose(&mut self, mask: &MaskState, _fit: &TwoGroupsFit) -> Result<ThresholdSurface> {
        let top = mask
            .masked_view()
            .into_iter()
            .map(|(_, pp, _)| pp)
            .reduce(f64::max)
            .ok_or(AdaptError::Terminal)?;
        let s = if top > 0.0 { next_below(top) } else { 0.0 };
        let values = mask.surface().values().iter().map(|&v| v.min(s)).collect();
        ThresholdSurface::new(values)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub family: Family,
    /// Candidate featurizations; the best is chosen once at the start.
    pub candidates: Vec<FeaturePair>,
    pub criterion: SelectionCriterion,
    /// Initial constant threshold, in `(0, 0.5]`.
    pub s0: f64,
    pub refit: RefitCadence,
    /// Target FDR level; `None` runs to full unmasking for q-values.
    pub alpha: Option<f64>,
    pub em: EmConfig,
    pub strategy: StrategyKind,
    /// Keep `pi1` and `mu` from every refit for diagnostics.
    pub record_fits: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            family: Family::Beta,
            candidates: [6, 8, 10]
                .into_iter()
                .map(|knots| FeaturePair::same(Featurization::NaturalSpline { knots }))
                .collect(),
            criterion: SelectionCriterion::Bic,
            s0: 0.45,
            refit: RefitCadence::Auto,
            alpha: None,
            em: EmConfig::default(),
            strategy: StrategyKind::RevealOne,
            record_fits: true,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0 && self.s0 <= 0.5) {
            return Err(AdaptError::InvalidConfig(format!("s0 = {} must lie in (0, 0.5]", self.s0)));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(AdaptError::InvalidConfig(format!("alpha = {a} must lie in (0, 1]")));
            }
        }
        if self.candidates.is_empty() {
            return Err(AdaptError::InvalidConfig("no candidate featurizations".into()));
        }
        if let SelectionCriterion::Cv { folds } = self.criterion {
            if folds < 2 {
                return Err(AdaptError::InvalidConfig(format!("{folds} CV folds; need at least 2")));
            }
        }
        if self.refit == RefitCadence::Every(0) {
            return Err(AdaptError::InvalidConfig("refit cadence must be positive".into()));
        }
        if self.em.tol.is_nan() || self.em.tol < 0.0 {
            return Err(AdaptError::InvalidConfig("EM tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// `pi1` and `mu` in effect from step `t` on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub t: usize,
    pub family: Family,
    pub pi1: Vec<f64>,
    pub mu: Vec<f64>,
}

impl FitRecord {
    pub fn fit(&self) -> TwoGroupsFit {
        TwoGroupsFit::from_params(self.family, self.pi1.clone(), self.mu.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptResult {
    pub alpha: Option<f64>,
    /// Indices rejected at `alpha`, ascending.
    pub rejections: Vec<usize>,
    /// Present when the run went to full unmasking.
    pub qvalues: Option<Vec<f64>>,
    pub trace: ProtocolTrace,
    pub final_fit: TwoGroupsFit,
    /// Local FDR at the visible value of each hypothesis under the final fit.
    pub lfdr: Vec<f64>,
    pub surface: ThresholdSurface,
    pub pair: FeaturePair,
    pub selection: Vec<CandidateScore>,
    pub fits: Vec<FitRecord>,
}

impl AdaptResult {
    /// `{i : q_i <= alpha}`; needs q-values.
    pub fn rejections_at(&self, alpha: f64) -> Option<Vec<usize>> {
        self.qvalues
            .as_ref()
            .map(|q| (0..q.len()).filter(|&i| q[i] <= alpha).collect())
    }
}

pub struct Engine {
    h: HypothesisSet,
    config: AdaptConfig,
    pair: FeaturePair,
    designs: Designs,
    selection: Vec<CandidateScore>,
    selection_fallback: bool,
    mask: MaskState,
    fit: TwoGroupsFit,
    em: EmConfig,
    trace: ProtocolTrace,
    since_refit: usize,
    refits: usize,
    fits: Vec<FitRecord>,
    updater: Box<dyn Updater>,
}

fn flat_fit(family: Family, n: usize) -> TwoGroupsFit {
    TwoGroupsFit::from_params(family, vec![PI_EPS; n], vec![family.clamp_mu(family.null_mu()); n])
}

impl Engine {
    pub fn new(h: HypothesisSet, config: AdaptConfig) -> Result<Self> {
        let updater = config.strategy.build();
        Self::with_updater(h, config, updater)
    }

    /// An engine driven by a custom update rule.
    pub fn with_updater(h: HypothesisSet, config: AdaptConfig, updater: Box<dyn Updater>) -> Result<Self> {
        config.validate()?;
        if h.is_empty() {
            return Err(AdaptError::InvalidArgument("no hypotheses".into()));
        }
        let n = h.len();
        let surface = ThresholdSurface::constant(n, config.s0)?;
        let m = mask(&h, &surface);
        let mut trace = ProtocolTrace::new(n);
        trace.push(m.a(), m.r());
        for i in 0..n {
            if !m.is_masked(i) {
                trace.mark_revealed(i, 0, h.pvalues()[i] > 0.5);
            }
        }
        let em = config.em.clone();
        let mut engine = Self {
            pair: FeaturePair::same(Featurization::Intercept),
            designs: Designs::intercept_only(n),
            selection: Vec::new(),
            selection_fallback: false,
            fit: flat_fit(config.family, n),
            em,
            trace,
            since_refit: 0,
            refits: 0,
            fits: Vec::new(),
            updater,
            mask: m,
            h,
            config,
        };
        if engine.config.strategy.needs_model() {
            engine.select(engine.config.candidates.clone())?;
        }
        Ok(engine)
    }

    /// Chooses a featurization from the masked data and refits.
    fn select(&mut self, candidates: Vec<FeaturePair>) -> Result<()> {
        self.em = self.config.em.clone();
        let sel = select_featurization(
            &candidates,
            &self.h,
            &self.mask,
            self.config.family,
            &self.em,
            self.config.criterion,
        )?;
        self.designs = sel.pair.designs(&self.h)?;
        self.pair = sel.pair;
        self.selection = sel.scores;
        self.selection_fallback = sel.fallback;
        self.install(sel.fit);
        self.config.candidates = candidates;
        Ok(())
    }

    fn install(&mut self, fit: TwoGroupsFit) {
        // Cross-validated penalties are chosen once and then kept.
        if let Penalty::L1 {
            pi_lambda,
            mu_lambda,
            ..
        } = &mut self.em.penalty
        {
            *pi_lambda = pi_lambda.or(fit.pi_lambda);
            *mu_lambda = mu_lambda.or(fit.mu_lambda);
        }
        if self.config.record_fits {
            self.fits.push(FitRecord {
                t: self.t(),
                family: fit.family,
                pi1: fit.pi1.clone(),
                mu: fit.mu.clone(),
            });
        }
        self.fit = fit;
        self.since_refit = 0;
        self.refits += 1;
    }

    pub fn t(&self) -> usize {
        self.trace.steps.len() - 1
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn config(&self) -> &AdaptConfig {
        &self.config
    }

    pub fn mask(&self) -> &MaskState {
        &self.mask
    }

    pub fn fit(&self) -> &TwoGroupsFit {
        &self.fit
    }

    pub fn trace(&self) -> &ProtocolTrace {
        &self.trace
    }

    pub fn pair(&self) -> &FeaturePair {
        &self.pair
    }

    pub fn fdp_hat(&self) -> f64 {
        self.mask.fdp_hat()
    }

    pub fn is_terminal(&self) -> bool {
        self.mask.masked_count() == 0
    }

    /// Refits EM on the current masked data, warm-started from the current
    /// fit. A failed fit keeps the previous one.
    pub fn refit(&mut self) -> Result<()> {
        if !self.config.strategy.needs_model() {
            return Ok(());
        }
        let t = self.t();
        match run_em(&self.mask, &self.designs, self.config.family, &self.em, Some(&self.fit)) {
            Ok(fit) => {
                self.install(fit);
                self.trace.steps[t].refit = true;
            }
            Err(_) => {
                self.since_refit = 0;
                self.trace.steps[t].refit_failed = true;
            }
        }
        Ok(())
    }

    /// Re-selects among `candidates` using the current masked data.
    pub fn set_featurization(&mut self, candidates: Vec<FeaturePair>) -> Result<()> {
        if candidates.is_empty() {
            return Err(AdaptError::InvalidConfig("no candidate featurizations".into()));
        }
        let t = self.t();
        self.select(candidates)?;
        self.trace.steps[t].refit = true;
        Ok(())
    }

    /// Switches the exponential family and re-selects the featurization.
    pub fn set_family(&mut self, family: Family) -> Result<()> {
        let old = self.config.family;
        self.config.family = family;
        let t = self.t();
        if let Err(e) = self.select(self.config.candidates.clone()) {
            self.config.family = old;
            return Err(e);
        }
        self.trace.steps[t].refit = true;
        Ok(())
    }

    /// One threshold update. Returns `false` when nothing is left masked.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_terminal() {
            return Ok(false);
        }
        if self.since_refit >= self.config.refit.reveals(self.len()) {
            self.refit()?;
        }
        let proposed = self.updater.propose(&self.mask, &self.fit)?;
        let surface = self.mask.surface().update(proposed)?;
        let next = mask(&self.h, &surface);
        let newly: Vec<usize> = (0..self.len())
            .filter(|&i| self.mask.is_masked(i) && !next.is_masked(i))
            .collect();
        if newly.is_empty() {
            return Err(AdaptError::NoProgress);
        }
        let t = self.t();
        self.trace.steps[t].revealed = newly.clone();
        self.trace.push(next.a(), next.r());
        for &i in &newly {
            self.trace.mark_revealed(i, t + 1, self.h.pvalues()[i] > 0.5);
        }
        self.since_refit += newly.len();
        self.mask = next;
        Ok(true)
    }

    /// Up to `k` updates; returns how many were made.
    pub fn step_n(&mut self, k: usize) -> Result<usize> {
        for done in 0..k {
            if !self.step()? {
                return Ok(done);
            }
        }
        Ok(k)
    }

    /// Updates until FDP-hat is at most `alpha` or nothing is masked.
    pub fn run_until(&mut self, alpha: f64) -> Result<()> {
        while self.fdp_hat() > alpha && self.step()? {}
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while self.step()? {}
        Ok(())
    }

    /// Currently masked hypotheses with `p <= 0.5`, i.e. `{p_i <= s_t(x_i)}`.
    pub fn current_rejections(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.mask.is_masked(i) && self.h.pvalues()[i] <= 0.5)
            .collect()
    }

    /// Stops the protocol. With `alpha`, updates until FDP-hat is at most
    /// `alpha` and rejects the current `R` set (empty if the level was never
    /// reached). Without it, runs to full unmasking and reports q-values.
    pub fn finalize(mut self, alpha: Option<f64>) -> Result<AdaptResult> {
        let rejections = match alpha {
            Some(a) => {
                self.run_until(a)?;
                if self.fdp_hat() <= a { self.current_rejections() } else { Vec::new() }
            }
            None => {
                self.run_to_end()?;
                Vec::new()
            }
        };
        let qvalues = if self.trace.is_complete() {
            Some(q_values(&self.trace)?)
        } else {
            None
        };
        let lfdr = LfdrProfile::new(&self.fit, &self.mask).lfdr;
        Ok(AdaptResult {
            alpha,
            rejections,
            qvalues,
            lfdr,
            surface: self.mask.surface().clone(),
            trace: self.trace,
            final_fit: self.fit,
            pair: self.pair,
            selection: self.selection,
            fits: self.fits,
        })
    }

    /// What the analyst sees now.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot::build(self)
    }
}

/// Runs the whole protocol with `config.alpha` (or to full unmasking).
pub fn run_adapt(h: &HypothesisSet, config: &AdaptConfig) -> Result<AdaptResult> {
    let alpha = config.alpha;
    Engine::new(h.clone(), config.clone())?.finalize(alpha)
}
