//! Choosing featurizations for `pi1` and `mu` by BIC or cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Featurization;
use crate::data::HypothesisSet;
use crate::em::{e_step, expected_loglik, run_em, Designs, EmConfig, FeaturePair, TwoGroupsFit};
use crate::error::{AdaptError, Result};
use crate::expfam::Family;
use crate::masking::MaskState;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionCriterion {
    /// `ln n * (df_pi + df_mu) - 2 l~`, minimized.
    #[default]
    Bic,
    /// Held-out expected log-likelihood summed over folds, maximized.
    Cv { folds: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub pair: FeaturePair,
    pub df_pi: usize,
    pub df_mu: usize,
    /// Expected log-likelihood of the full-data fit, if it succeeded.
    pub expected_loglik: Option<f64>,
    /// BIC or summed held-out log-likelihood; `None` when fitting failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

impl CandidateScore {
    /// BIC from the stored fields.
    pub fn bic(&self, n: usize) -> Option<f64> {
        self.expected_loglik
            .map(|l| (n as f64).ln() * (self.df_pi + self.df_mu) as f64 - 2.0 * l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: Option<usize>,
    pub pair: FeaturePair,
    pub scores: Vec<CandidateScore>,
    pub fit: TwoGroupsFit,
    /// Every candidate failed and the intercept-only model was used.
    pub fallback: bool,
}

fn cv_score(
    h: &HypothesisSet,
    mask: &MaskState,
    designs: &Designs,
    family: Family,
    config: &EmConfig,
    folds: usize,
) -> Result<f64> {
    let n = h.len();
    if folds < 2 || folds > n {
        return Err(AdaptError::InvalidArgument(format!(
            "{folds} folds for {n} hypotheses"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut total = 0.0;
    for k in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&pos| pos % folds == k);
        let test: Vec<usize> = test.into_iter().map(|pos| order[pos]).collect();
        let train: Vec<usize> = train.into_iter().map(|pos| order[pos]).collect();
        let fit = run_em(
            &mask.subset(&train),
            &designs.rows(&train),
            family,
            config,
            None,
        )?;
        let (pi1, mu) = fit.predict(&designs.rows(&test));
        let held_mask = mask.subset(&test);
        let held = TwoGroupsFit::from_params(family, pi1, mu);
        let e = e_step(&held, &held_mask);
        total += expected_loglik(family, &held.pi1, &held.mu, &e);
    }
    Ok(total)
}

/// Fits every candidate pair once by EM and picks the best.
///
/// Featurizations are evaluated on the full covariates; the score only uses
/// the masked view in `mask`. With a single candidate the selection is that
/// candidate. If every candidate fails, the intercept-only pair is fitted
/// and `fallback` is set.
pub fn select_featurization(
    candidates: &[FeaturePair],
    h: &HypothesisSet,
    mask: &MaskState,
    family: Family,
    config: &EmConfig,
    criterion: SelectionCriterion,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(AdaptError::InvalidArgument("no candidate featurizations".into()));
    }
    let n = h.len();
    let mut scores = Vec::with_capacity(candidates.len());
    let mut fits = Vec::with_capacity(candidates.len());
    for pair in candidates {
        let (df_pi, df_mu) = pair.df(h.dim());
        let outcome = pair.designs(h).and_then(|d| {
            let fit = run_em(mask, &d, family, config, None)?;
            let score = match criterion {
                SelectionCriterion::Bic => {
                    (n as f64).ln() * (df_pi + df_mu) as f64 - 2.0 * fit.expected_loglik
                }
                SelectionCriterion::Cv { folds } => cv_score(h, mask, &d, family, config, folds)?,
            };
            Ok((fit, score))
        });
        match outcome {
            Ok((fit, score)) => {
                scores.push(CandidateScore {
                    pair: pair.clone(),
                    df_pi,
                    df_mu,
                    expected_loglik: Some(fit.expected_loglik),
                    score: Some(score),
                    error: None,
                });
                fits.push(Some(fit));
            }
            Err(e) => {
                scores.push(CandidateScore {
                    pair: pair.clone(),
                    df_pi,
                    df_mu,
                    expected_loglik: None,
                    score: None,
                    error: Some(e.to_string()),
                });
                fits.push(None);
            }
        }
    }

    let better = |a: f64, b: f64| match criterion {
        SelectionCriterion::Bic => a < b,
        SelectionCriterion::Cv { .. } => a > b,
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = s.score.filter(|v| v.is_finite()) {
            if best.is_none_or(|(_, b)| better(v, b)) {
                best = Some((i, v));
            }
        }
    }

    match best {
        Some((i, _)) => Ok(Selection {
            index: Some(i),
            pair: candidates[i].clone(),
            fit: fits[i].take().expect("scored candidate has a fit"),
            scores,
            fallback: false,
        }),
        None => {
            let pair = FeaturePair::same(Featurization::Intercept);
            let fit = run_em(mask, &pair.designs(h)?, family, config, None)?;
            Ok(Selection {
                index: None,
                pair,
                scores,
                fit,
                fallback: true,
            })
        }
    }
}
