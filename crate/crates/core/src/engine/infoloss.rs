//! How much the masking costs the model: correlation between local FDRs
//! fitted during the run and from fully revealed data.

use serde::{Deserialize, Serialize};

use super::{AdaptConfig, AdaptResult};
use crate::data::HypothesisSet;
use crate::em::{run_em, EmConfig};
use crate::error::Result;
use crate::masking::{mask, ThresholdSurface};
use crate::threshold::local_fdr;

const STAR_ITERATIONS: usize = 1000;
const STAR_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoLossPoint {
    pub alpha: f64,
    /// Step at which FDP-hat first reached `alpha`.
    pub step: Option<usize>,
    /// `None` when the level was never reached or a vector is constant.
    pub correlation: Option<f64>,
}

/// Pearson correlation; `None` if either input is constant or lengths differ.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// For each `alpha`, the correlation between `lfdr_t(p_i | x_i)` under the
/// fit in effect when FDP-hat first reached `alpha` and `lfdr*(p_i | x_i)`
/// under a fit on the fully revealed data with the same featurization.
///
/// Uses the true p-values, so it is a diagnostic for simulations and
/// finished runs, never an input to the protocol.
pub fn info_loss_correlation(
    h: &HypothesisSet,
    result: &AdaptResult,
    config: &AdaptConfig,
    alphas: &[f64],
) -> Result<Vec<InfoLossPoint>> {
    let family = result.final_fit.family;
    let designs = result.pair.designs(h)?;
    let full = mask(h, &ThresholdSurface::constant(h.len(), 0.0)?);
    // Nothing is masked, so the usual initialization starts every hypothesis
    // at the null; run EM to convergence instead of the protocol budget.
    let em = EmConfig {
        iterations: config.em.iterations.max(STAR_ITERATIONS),
        tol: config.em.tol.min(STAR_TOL),
        ..config.em.clone()
    };
    let star = run_em(&full, &designs, family, &em, None)?;
    let lstar: Vec<f64> = (0..h.len()).map(|i| local_fdr(&star, h.pvalues()[i], i)).collect();
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let step = result.trace.first_below(alpha);
            let correlation = step.and_then(|t| {
                let record = result.fits.iter().rev().find(|r| r.t <= t)?;
                let fit = record.fit();
                let lt: Vec<f64> = (0..h.len()).map(|i| local_fdr(&fit, h.pvalues()[i], i)).collect();
                pearson(&lt, &lstar)
            });
            InfoLossPoint {
                alpha,
                step,
                correlation,
            }
        })
        .collect())
}
