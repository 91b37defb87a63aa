//! Local FDR and the reveal-one threshold update.

use serde::{Deserialize, Serialize};

use crate::em::TwoGroupsFit;
use crate::error::{AdaptError, Result};
use crate::masking::{next_below, MaskState, ThresholdSurface};

/// Amount subtracted from the largest masked lfdr to get the level `c`.
pub const LEVEL_OFFSET: f64 = 1e-15;

/// Width of the band around `c` inside which the equivalence check does not
/// insist on agreement (the two sides differ only by rounding there).
pub const TIE_BAND: f64 = 1e-9;

fn mixture(fit: &TwoGroupsFit, p: f64, i: usize) -> f64 {
    let f = fit.family.mixture_density(p, fit.pi1[i], fit.mu[i]);
    if f.is_nan() { 1.0 - fit.pi1[i] } else { f }
}

/// `f(1 | x_i) / f(p | x_i)` before clamping to `(0, 1]`.
fn raw_lfdr(fit: &TwoGroupsFit, p: f64, i: usize) -> f64 {
    mixture(fit, 1.0, i) / mixture(fit, p, i)
}

/// Estimated local FDR of hypothesis `i` at p-value `p`, attributing as much
/// mass as possible to the null: `f(1 | x) / f(p | x)`, clamped to `(0, 1]`.
pub fn local_fdr(fit: &TwoGroupsFit, p: f64, i: usize) -> f64 {
    raw_lfdr(fit, p, i).clamp(f64::MIN_POSITIVE, 1.0)
}

/// Local FDR at the visible value of every hypothesis (`p'` when masked).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfdrProfile {
    pub lfdr: Vec<f64>,
    pub masked: Vec<bool>,
    /// Values that exceeded 1 before clamping.
    pub clamped: usize,
}

impl LfdrProfile {
    pub fn new(fit: &TwoGroupsFit, mask: &MaskState) -> Self {
        let mut clamped = 0;
        let lfdr = (0..mask.len())
            .map(|i| {
                let raw = raw_lfdr(fit, mask.pprime()[i], i);
                clamped += usize::from(raw > 1.0);
                raw.clamp(f64::MIN_POSITIVE, 1.0)
            })
            .collect();
        Self {
            lfdr,
            masked: (0..mask.len()).map(|i| mask.is_masked(i)).collect(),
            clamped,
        }
    }

    /// Largest lfdr among masked hypotheses.
    pub fn max_masked(&self) -> Option<f64> {
        self.lfdr
            .iter()
            .zip(&self.masked)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .reduce(f64::max)
    }
}

/// `s(x_i; c)`: the largest `p <= 0.5` with `lfdr(p | x_i) <= c`, or 0.5 when
/// the mixture is flat and `c >= 1`.
pub fn level_surface_at(fit: &TwoGroupsFit, c: f64, i: usize) -> Result<f64> {
    if c >= 1.0 {
        return Ok(0.5);
    }
    let target = mixture(fit, 1.0, i) / c;
    Ok(fit.family.invert_mixture_density(target, fit.pi1[i], fit.mu[i])?.p)
}

/// Outcome of one reveal-one update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealStep {
    pub surface: ThresholdSurface,
    /// The level `c` used for the new surface.
    pub level: f64,
    /// Masked hypotheses that the new surface reveals.
    pub revealed: Vec<usize>,
    /// Entries where the inverted surface had to be moved to agree with the
    /// lfdr ordering.
    pub snapped: usize,
}

/// Shrinks the surface so that exactly the masked hypotheses with the
/// largest estimated lfdr (all of them on ties) become revealed.
///
/// The new surface is `min(s_t(x), s(x; c))` with `c` just below the largest
/// masked lfdr. Where the inversion disagrees with the lfdr comparison by
/// rounding, the surface is moved to the nearest value that honors it.
pub fn reveal_one_update(
    surface: &ThresholdSurface,
    fit: &TwoGroupsFit,
    mask: &MaskState,
) -> Result<RevealStep> {
    let profile = LfdrProfile::new(fit, mask);
    let top = profile.max_masked().ok_or(AdaptError::Terminal)?;
    let level = top - LEVEL_OFFSET;
    let mut values = Vec::with_capacity(mask.len());
    let mut revealed = Vec::new();
    let mut snapped = 0;
    for i in 0..mask.len() {
        let current = surface.get(i);
        let inverted = level_surface_at(fit, level, i).unwrap_or(current);
        let mut s = current.min(inverted);
        if mask.is_masked(i) {
            let pp = mask.pprime()[i];
            if profile.lfdr[i] > level {
                revealed.push(i);
                if s >= pp {
                    s = if pp > 0.0 { next_below(pp) } else { 0.0 };
                    snapped += 1;
                }
            } else if s < pp {
                s = pp.min(current);
                snapped += 1;
            }
        }
        values.push(s.max(0.0));
    }
    let surface = surface.update(ThresholdSurface::new(values)?)?;
    Ok(RevealStep {
        surface,
        level,
        revealed,
        snapped,
    })
}

/// Checks that for masked hypotheses `p' <= s(x; c)` holds exactly when
/// `lfdr(p') <= c`, ignoring hypotheses whose lfdr is within [`TIE_BAND`]
/// of `c`.
pub fn monotone_equivalence_check(fit: &TwoGroupsFit, mask: &MaskState, c: f64) -> bool {
    (0..mask.len()).filter(|&i| mask.is_masked(i)).all(|i| {
        let pp = mask.pprime()[i];
        let l = local_fdr(fit, pp, i);
        if (l - c).abs() <= TIE_BAND {
            return true;
        }
        match level_surface_at(fit, c, i) {
            Ok(s) => (pp <= s) == (l <= c),
            Err(_) => false,
        }
    })
}
