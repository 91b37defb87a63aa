//! EM estimation of `pi1(x)` and `mu(x)` from partially masked p-values.
//!
//! Each hypothesis is non-null (`H = 1`) with probability `pi1(x)`; non-null
//! p-values have density `h(p; mu(x))` and nulls are uniform. For a masked
//! hypothesis the analyst sees only the pair `{p', 1 - p'}`, so the E-step
//! also averages over which member of the pair is the real p-value. The
//! counts `A` and `R` are treated as missing.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::HypothesisSet;
use crate::error::{AdaptError, Result};
use crate::expfam::Family;
use crate::glm::{
    fit_l1_fixed, fit_l1_glm, fit_weighted_glm, Featurization, GlmFamily, GlmFit, GlmSpec,
    IrlsOptions, LassoOptions, Link,
};
use crate::masking::MaskState;

/// Clamp applied to fitted `pi1`.
pub const PI_EPS: f64 = 1e-6;

/// How the `mu` GLM is weighted in the M-step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuFitMode {
    /// All hypotheses weighted equally. More robust when nulls are not
    /// exactly uniform.
    #[default]
    Unweighted,
    /// Weights `H_hat`, the exact maximizer of the expected log-likelihood.
    Weighted,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    #[default]
    None,
    /// Lasso for both GLMs. A missing lambda is chosen by cross-validation
    /// at its first use and then kept.
    L1 {
        folds: usize,
        n_lambda: usize,
        pi_lambda: Option<f64>,
        mu_lambda: Option<f64>,
    },
}

impl Penalty {
    pub fn l1() -> Self {
        Penalty::L1 {
            folds: 5,
            n_lambda: 20,
            pi_lambda: None,
            mu_lambda: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub iterations: usize,
    /// Relative change in the expected log-likelihood below which EM stops.
    pub tol: f64,
    pub mu_mode: MuFitMode,
    pub penalty: Penalty,
    /// Link for the `mu` GLM; `None` uses the canonical link.
    pub mu_link: Option<Link>,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            tol: 1e-6,
            mu_mode: MuFitMode::Unweighted,
            penalty: Penalty::None,
            mu_link: None,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn mu_spec(&self, family: Family) -> GlmSpec {
        let glm_family = match family {
            Family::Beta => GlmFamily::Gamma,
            Family::Gaussian => GlmFamily::Gaussian,
        };
        GlmSpec::new(glm_family, self.mu_link.unwrap_or(glm_family.canonical_link()))
    }
}

/// Featurizations for `pi1` and `mu`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeaturePair {
    pub pi: Featurization,
    pub mu: Featurization,
}

impl FeaturePair {
    pub fn new(pi: Featurization, mu: Featurization) -> Self {
        Self { pi, mu }
    }

    pub fn same(f: Featurization) -> Self {
        Self {
            pi: f.clone(),
            mu: f,
        }
    }

    pub fn df(&self, dim: usize) -> (usize, usize) {
        (self.pi.df(dim), self.mu.df(dim))
    }

    pub fn designs(&self, h: &HypothesisSet) -> Result<Designs> {
        Ok(Designs {
            pi: self.pi.design(h)?,
            mu: self.mu.design(h)?,
        })
    }
}

impl fmt::Display for FeaturePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pi == self.mu {
            write!(f, "{}", self.pi)
        } else {
            write!(f, "{}/{}", self.pi, self.mu)
        }
    }
}

impl FromStr for FeaturePair {
    type Err = AdaptError;

    /// `F` uses one featurization for both models; `F/G` sets `pi` and `mu`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((pi, mu)) => Ok(Self::new(pi.parse()?, mu.parse()?)),
            None => Ok(Self::same(s.parse()?)),
        }
    }
}

/// Design matrices for both GLMs; column 0 is the intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct Designs {
    pub pi: DMatrix<f64>,
    pub mu: DMatrix<f64>,
}

impl Designs {
    pub fn len(&self) -> usize {
        self.pi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.nrows() == 0
    }

    pub fn intercept_only(n: usize) -> Self {
        Self {
            pi: DMatrix::from_element(n, 1, 1.0),
            mu: DMatrix::from_element(n, 1, 1.0),
        }
    }

    pub fn rows(&self, rows: &[usize]) -> Self {
        Self {
            pi: self.pi.select_rows(rows),
            mu: self.mu.select_rows(rows),
        }
    }
}

/// Fitted two-groups model evaluated at every hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupsFit {
    pub family: Family,
    pub mu_spec: GlmSpec,
    pub pi1: Vec<f64>,
    pub mu: Vec<f64>,
    /// Logistic coefficients for `pi1`.
    pub theta: Vec<f64>,
    /// GLM coefficients for `mu`.
    pub beta: Vec<f64>,
    /// Expected complete-data log-likelihood at the final parameters.
    pub expected_loglik: f64,
    /// Observed-data log-likelihood of the masked view at the final parameters.
    pub loglik: f64,
    /// Expected log-likelihood `Q(theta_r | theta_r)` after each iteration,
    /// starting with the initial parameters.
    pub q_trace: Vec<f64>,
    pub loglik_trace: Vec<f64>,
    /// `Q(theta_{r+1} | theta_r) - Q(theta_r | theta_r)` for each M-step.
    pub q_gain: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// An M-step lowered the expected log-likelihood and was undone.
    pub reverted: bool,
    pub pi_lambda: Option<f64>,
    pub mu_lambda: Option<f64>,
    /// Fitted values pushed back into their domains at the last M-step.
    pub clamped_pi: usize,
    pub clamped_mu: usize,
}

impl TwoGroupsFit {
    /// A fit with given per-hypothesis parameters and no coefficients.
    pub fn from_params(family: Family, pi1: Vec<f64>, mu: Vec<f64>) -> Self {
        Self {
            family,
            mu_spec: EmConfig::default().mu_spec(family),
            pi1,
            mu,
            theta: Vec::new(),
            beta: Vec::new(),
            expected_loglik: f64::NAN,
            loglik: f64::NAN,
            q_trace: Vec::new(),
            loglik_trace: Vec::new(),
            q_gain: Vec::new(),
            iterations: 0,
            converged: false,
            reverted: false,
            pi_lambda: None,
            mu_lambda: None,
            clamped_pi: 0,
            clamped_mu: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pi1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi1.is_empty()
    }

    /// Parameters at arbitrary design rows, using the fitted coefficients.
    pub fn predict(&self, designs: &Designs) -> (Vec<f64>, Vec<f64>) {
        let pi = (0..designs.len())
            .map(|i| {
                let eta: f64 = designs.pi.row(i).iter().zip(&self.theta).map(|(a, b)| a * b).sum();
                Link::Logit.inverse(eta).clamp(PI_EPS, 1.0 - PI_EPS)
            })
            .collect();
        let mu = (0..designs.len())
            .map(|i| {
                let eta: f64 = designs.mu.row(i).iter().zip(&self.beta).map(|(a, b)| a * b).sum();
                let m = self.mu_spec.link.inverse(eta);
                let m = if self.mu_spec.family.valid_mu(m) { m } else { f64::NAN };
                self.family.clamp_mu(m)
            })
            .collect();
        (pi, mu)
    }
}

/// Sufficient statistics of the visible data, fixed for one mask.
pub(crate) struct Observed {
    masked: Vec<bool>,
    /// `g(p)` for revealed, `g(p')` for masked hypotheses.
    ya: Vec<f64>,
    /// `g(1 - p')` for masked hypotheses, unused otherwise.
    yb: Vec<f64>,
}

impl Observed {
    pub(crate) fn new(family: Family, mask: &MaskState) -> Self {
        let n = mask.len();
        let mut ya = Vec::with_capacity(n);
        let mut yb = Vec::with_capacity(n);
        let mut masked = Vec::with_capacity(n);
        for i in 0..n {
            if mask.is_masked(i) {
                let pp = mask.pprime()[i];
                ya.push(family.g(pp));
                yb.push(family.g_mirror(pp));
                masked.push(true);
            } else {
                ya.push(family.g(mask.observed()[i]));
                yb.push(0.0);
                masked.push(false);
            }
        }
        Self { masked, ya, yb }
    }
}

/// E-step output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EStep {
    /// Posterior probability of being non-null.
    pub h_hat: Vec<f64>,
    /// Posterior mean of `g(p)` given non-null.
    pub y_hat: Vec<f64>,
    /// Observed-data log-likelihood of the masked view.
    pub loglik: f64,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn e_step_observed(family: Family, pi1: &[f64], mu: &[f64], obs: &Observed) -> EStep {
    let n = pi1.len();
    let mut h_hat = Vec::with_capacity(n);
    let mut y_hat = Vec::with_capacity(n);
    let mut loglik = 0.0;
    for i in 0..n {
        let eta = family.eta(mu[i]);
        let a = family.log_partition(mu[i]);
        let lpi = pi1[i].ln();
        let l0 = (-pi1[i]).ln_1p();
        if obs.masked[i] {
            let la = eta * obs.ya[i] - a;
            let lb = eta * obs.yb[i] - a;
            let lsum = log_add_exp(la, lb);
            let l1 = lpi + lsum;
            let l0 = l0 + std::f64::consts::LN_2;
            h_hat.push(sigmoid(l1 - l0));
            let wa = sigmoid(la - lb);
            y_hat.push(wa * obs.ya[i] + (1.0 - wa) * obs.yb[i]);
            loglik += log_add_exp(l1, l0);
        } else {
            let l1 = lpi + eta * obs.ya[i] - a;
            h_hat.push(sigmoid(l1 - l0));
            y_hat.push(obs.ya[i]);
            loglik += log_add_exp(l1, l0);
        }
    }
    EStep {
        h_hat,
        y_hat,
        loglik,
    }
}

/// Posterior non-null probabilities and conditional sufficient statistics.
pub fn e_step(fit: &TwoGroupsFit, mask: &MaskState) -> EStep {
    let obs = Observed::new(fit.family, mask);
    e_step_observed(fit.family, &fit.pi1, &fit.mu, &obs)
}

/// Expected complete-data log-likelihood of `(pi1, mu)` under the E-step
/// weights `e`, dropping terms that do not depend on the parameters.
pub fn expected_loglik(family: Family, pi1: &[f64], mu: &[f64], e: &EStep) -> f64 {
    (0..pi1.len())
        .map(|i| {
            let h = e.h_hat[i];
            h * pi1[i].ln()
                + (1.0 - h) * (-pi1[i]).ln_1p()
                + h * (family.eta(mu[i]) * e.y_hat[i] - family.log_partition(mu[i]))
        })
        .sum()
}

#[derive(Clone, Debug)]
struct Params {
    pi1: Vec<f64>,
    mu: Vec<f64>,
    theta: Vec<f64>,
    beta: Vec<f64>,
    pi_lambda: Option<f64>,
    mu_lambda: Option<f64>,
    clamped_pi: usize,
    clamped_mu: usize,
}

fn clamp_pi(fitted: &[f64]) -> (Vec<f64>, usize) {
    let mut count = 0;
    let v = fitted
        .iter()
        .map(|&p| {
            let c = p.clamp(PI_EPS, 1.0 - PI_EPS);
            count += usize::from(c != p);
            c
        })
        .collect();
    (v, count)
}

fn clamp_mu(family: Family, fitted: &[f64]) -> (Vec<f64>, usize) {
    let mut count = 0;
    let v = fitted
        .iter()
        .map(|&m| {
            let c = family.clamp_mu(m);
            count += usize::from(c != m);
            c
        })
        .collect();
    (v, count)
}

/// One GLM fit honoring the penalty. Returns the fit and the lambda used.
#[allow(clippy::too_many_arguments)]
fn fit_glm(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    spec: GlmSpec,
    penalty: &Penalty,
    lambda: Option<f64>,
    start: Option<&[f64]>,
    seed: u64,
) -> Result<(GlmFit, Option<f64>)> {
    // A constant response makes the unpenalized logistic fit diverge; the
    // intercept-only answer is exact.
    if let Some(c) = constant(y, w) {
        if spec.family == GlmFamily::Binomial && (c <= 0.0 || c >= 1.0) {
            let m = c.clamp(PI_EPS, 1.0 - PI_EPS);
            let mut coef = vec![0.0; x.ncols()];
            coef[0] = spec.link.link(m);
            return Ok((
                GlmFit {
                    coefficients: coef,
                    spec,
                    fitted: vec![m; y.len()],
                    converged: true,
                    iterations: 0,
                    deviance: 0.0,
                    deviance_trace: Vec::new(),
                    ridge: false,
                },
                lambda,
            ));
        }
    }
    match penalty {
        Penalty::None => {
            let opts = IrlsOptions {
                start: start.map(<[f64]>::to_vec),
                ..IrlsOptions::default()
            };
            Ok((fit_weighted_glm(x, y, w, spec, &opts)?, None))
        }
        Penalty::L1 { folds, n_lambda, .. } => {
            let opts = LassoOptions {
                folds: *folds,
                n_lambda: *n_lambda,
                seed,
                ..LassoOptions::default()
            };
            match lambda {
                Some(l) => Ok((fit_l1_fixed(x, y, w, spec, l, start, &opts)?, Some(l))),
                None => {
                    let path = fit_l1_glm(x, y, w, spec, &opts)?;
                    Ok((path.fit, Some(path.lambda)))
                }
            }
        }
    }
}

fn constant(y: &[f64], w: &[f64]) -> Option<f64> {
    let mut vals = y.iter().zip(w).filter(|(_, &w)| w > 0.0).map(|(&y, _)| y);
    let first = vals.next()?;
    vals.all(|v| v == first).then_some(first)
}

fn initial_params(
    mask: &MaskState,
    designs: &Designs,
    family: Family,
    config: &EmConfig,
) -> Result<Params> {
    let n = mask.len();
    let s = mask.surface().values();
    // J = 1 for revealed hypotheses: E[1 - J / (1 - 2 s)] <= pi1. A revealed
    // hypothesis needs p' > s, impossible when s = 0.5.
    let j_tilde: Vec<f64> = (0..n)
        .map(|i| {
            let denom = 1.0 - 2.0 * s[i];
            if mask.is_masked(i) || denom <= 0.0 {
                1.0
            } else {
                1.0 - 1.0 / denom
            }
        })
        .collect();
    let ones = vec![1.0; n];
    let (linear, _) = fit_glm(
        &designs.pi,
        &j_tilde,
        &ones,
        GlmSpec::new(GlmFamily::Gaussian, Link::Identity),
        &config.penalty,
        penalty_lambda(&config.penalty, true),
        None,
        config.seed,
    )?;
    let (pi1, clamped_pi) = clamp_pi(&linear.fitted);
    // Logistic coefficients closest to the truncated fit, for warm starts.
    let (pi_fit, _) = fit_glm(
        &designs.pi,
        &pi1,
        &ones,
        GlmSpec::LOGISTIC,
        &Penalty::None,
        None,
        None,
        config.seed,
    )?;

    let y: Vec<f64> = (0..n).map(|i| family.g(mask.observed()[i])).collect();
    let spec = config.mu_spec(family);
    let (mu_fit, _) = fit_glm(
        &designs.mu,
        &y,
        &ones,
        spec,
        &config.penalty,
        penalty_lambda(&config.penalty, false),
        None,
        config.seed,
    )?;
    let (mu, clamped_mu) = clamp_mu(family, &mu_fit.fitted);
    Ok(Params {
        pi1,
        mu,
        theta: pi_fit.coefficients,
        beta: mu_fit.coefficients,
        pi_lambda: None,
        mu_lambda: None,
        clamped_pi,
        clamped_mu,
    })
}

fn penalty_lambda(p: &Penalty, pi: bool) -> Option<f64> {
    match p {
        Penalty::None => None,
        Penalty::L1 {
            pi_lambda,
            mu_lambda,
            ..
        } => {
            if pi {
                *pi_lambda
            } else {
                *mu_lambda
            }
        }
    }
}

/// Initial estimates from the step-0 mask.
///
/// `pi1` is a least-squares fit of `J~ = 1 - J / (1 - 2 s0)`, with `J` the
/// revealed indicator, truncated to `[PI_EPS, 1 - PI_EPS]`; since
/// `E[J~] <= pi1` the start is conservative. `mu` is a GLM fit of `g(p~)`
/// with masked p-values imputed by `p'`.
pub fn initialize(
    mask: &MaskState,
    designs: &Designs,
    family: Family,
    config: &EmConfig,
) -> Result<TwoGroupsFit> {
    let params = initial_params(mask, designs, family, config)?;
    Ok(finish(family, config, params, &Observed::new(family, mask), Trace::default()))
}

fn m_step(
    e: &EStep,
    designs: &Designs,
    family: Family,
    config: &EmConfig,
    prev: &Params,
) -> Result<Params> {
    let n = e.h_hat.len();
    let ones = vec![1.0; n];
    let (pi_fit, pi_lambda) = fit_glm(
        &designs.pi,
        &e.h_hat,
        &ones,
        GlmSpec::LOGISTIC,
        &config.penalty,
        prev.pi_lambda.or(penalty_lambda(&config.penalty, true)),
        Some(&prev.theta),
        config.seed,
    )?;
    let weights = match config.mu_mode {
        MuFitMode::Unweighted => ones,
        MuFitMode::Weighted => e.h_hat.clone(),
    };
    let (mu_fit, mu_lambda) = fit_glm(
        &designs.mu,
        &e.y_hat,
        &weights,
        config.mu_spec(family),
        &config.penalty,
        prev.mu_lambda.or(penalty_lambda(&config.penalty, false)),
        Some(&prev.beta),
        config.seed.wrapping_add(1),
    )?;
    let (pi1, clamped_pi) = clamp_pi(&pi_fit.fitted);
    let (mu, clamped_mu) = clamp_mu(family, &mu_fit.fitted);
    Ok(Params {
        pi1,
        mu,
        theta: pi_fit.coefficients,
        beta: mu_fit.coefficients,
        pi_lambda,
        mu_lambda,
        clamped_pi,
        clamped_mu,
    })
}

/// Outputs of one M-step from fixed E-step weights, as a fit.
pub fn m_step_fit(
    e: &EStep,
    designs: &Designs,
    family: Family,
    config: &EmConfig,
) -> Result<TwoGroupsFit> {
    let n = e.h_hat.len();
    let start = Params {
        pi1: vec![0.5; n],
        mu: vec![family.clamp_mu(family.null_mu() + 1.0); n],
        theta: Vec::new(),
        beta: Vec::new(),
        pi_lambda: None,
        mu_lambda: None,
        clamped_pi: 0,
        clamped_mu: 0,
    };
    let p = m_step(e, designs, family, config, &start)?;
    let mut fit = TwoGroupsFit::from_params(family, p.pi1, p.mu);
    fit.mu_spec = config.mu_spec(family);
    fit.theta = p.theta;
    fit.beta = p.beta;
    fit.clamped_pi = p.clamped_pi;
    fit.clamped_mu = p.clamped_mu;
    Ok(fit)
}

#[derive(Default)]
struct Trace {
    q: Vec<f64>,
    loglik: Vec<f64>,
    gain: Vec<f64>,
    iterations: usize,
    converged: bool,
    reverted: bool,
}

fn finish(family: Family, config: &EmConfig, p: Params, obs: &Observed, t: Trace) -> TwoGroupsFit {
    let e = e_step_observed(family, &p.pi1, &p.mu, obs);
    let q = expected_loglik(family, &p.pi1, &p.mu, &e);
    TwoGroupsFit {
        family,
        mu_spec: config.mu_spec(family),
        pi1: p.pi1,
        mu: p.mu,
        theta: p.theta,
        beta: p.beta,
        expected_loglik: q,
        loglik: e.loglik,
        q_trace: t.q,
        loglik_trace: t.loglik,
        q_gain: t.gain,
        iterations: t.iterations,
        converged: t.converged,
        reverted: t.reverted,
        pi_lambda: p.pi_lambda,
        mu_lambda: p.mu_lambda,
        clamped_pi: p.clamped_pi,
        clamped_mu: p.clamped_mu,
    }
}

/// Runs EM from [`initialize`] (or from `warm`, a previous fit on the same
/// hypotheses and designs).
///
/// Stops after `config.iterations` M-steps or when the relative change of
/// the expected log-likelihood drops below `config.tol`. In weighted mode
/// without a penalty, an M-step that lowers the expected log-likelihood is
/// undone and EM stops, which keeps the observed log-likelihood monotone.
pub fn run_em(
    mask: &MaskState,
    designs: &Designs,
    family: Family,
    config: &EmConfig,
    warm: Option<&TwoGroupsFit>,
) -> Result<TwoGroupsFit> {
    if designs.len() != mask.len() {
        return Err(AdaptError::Dimension(format!(
            "designs have {} rows, mask has {}",
            designs.len(),
            mask.len()
        )));
    }
    let obs = Observed::new(family, mask);
    let mut params = match warm {
        Some(f) if f.family == family && f.len() == mask.len() && !f.theta.is_empty() => Params {
            pi1: f.pi1.clone(),
            mu: f.mu.clone(),
            theta: f.theta.clone(),
            beta: f.beta.clone(),
            pi_lambda: f.pi_lambda,
            mu_lambda: f.mu_lambda,
            clamped_pi: f.clamped_pi,
            clamped_mu: f.clamped_mu,
        },
        _ => initial_params(mask, designs, family, config)?,
    };
    let guarded = config.mu_mode == MuFitMode::Weighted && config.penalty == Penalty::None;

    let mut e = e_step_observed(family, &params.pi1, &params.mu, &obs);
    let mut q = expected_loglik(family, &params.pi1, &params.mu, &e);
    if !q.is_finite() || !e.loglik.is_finite() {
        return Err(AdaptError::NonFiniteLikelihood(0));
    }
    let mut trace = Trace {
        q: vec![q],
        loglik: vec![e.loglik],
        ..Trace::default()
    };
    for r in 1..=config.iterations {
        let next = m_step(&e, designs, family, config, &params)?;
        let cross = expected_loglik(family, &next.pi1, &next.mu, &e);
        let gain = cross - q;
        if guarded && gain < 0.0 {
            trace.reverted = true;
            trace.converged = true;
            break;
        }
        trace.gain.push(gain);
        trace.iterations = r;
        let next_e = e_step_observed(family, &next.pi1, &next.mu, &obs);
        let next_q = expected_loglik(family, &next.pi1, &next.mu, &next_e);
        if !next_q.is_finite() || !next_e.loglik.is_finite() {
            return Err(AdaptError::NonFiniteLikelihood(r));
        }
        let rel = (next_q - q).abs() / q.abs().max(f64::MIN_POSITIVE);
        params = next;
        e = next_e;
        q = next_q;
        trace.q.push(q);
        trace.loglik.push(e.loglik);
        if rel < config.tol {
            trace.converged = true;
            break;
        }
    }
    Ok(finish(family, config, params, &obs, trace))
}
