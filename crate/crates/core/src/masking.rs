//! The masking rule: which p-values the analyst sees, and the counts `A`, `R`.

use serde::{Deserialize, Serialize};

use crate::data::HypothesisSet;
use crate::error::{AdaptError, Result};

/// Rejection threshold `s(x_i)` evaluated at every observed covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSurface {
    values: Vec<f64>,
}

impl ThresholdSurface {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values
            .iter()
            .position(|s| !(0.0..=0.5).contains(s) || s.is_nan())
        {
            return Err(AdaptError::InvalidArgument(format!(
                "threshold value {} at index {i} is outside [0, 0.5]",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, s: f64) -> Result<Self> {
        Self::new(vec![s; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Accepts `proposed` only if it is pointwise no larger than `self`.
    pub fn update(&self, proposed: ThresholdSurface) -> Result<ThresholdSurface> {
        if proposed.len() != self.len() {
            return Err(AdaptError::Dimension(format!(
                "proposed surface has {} values, current has {}",
                proposed.len(),
                self.len()
            )));
        }
        for (index, (&new, &old)) in proposed.values.iter().zip(&self.values).enumerate() {
            if new > old {
                return Err(AdaptError::NonMonotoneUpdate {
                    index,
                    proposed: new,
                    current: old,
                });
            }
        }
        Ok(proposed)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            values: rows.iter().map(|&i| self.values[i]).collect(),
        }
    }
}

/// What the analyst may see at one step: the masked view, `A` and `R`.
///
/// For a masked hypothesis only `p' = min(p, 1 - p)` is stored, so nothing
/// derived from a `MaskState` can distinguish `p` from `1 - p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskState {
    surface: ThresholdSurface,
    revealed: Vec<bool>,
    pprime: Vec<f64>,
    /// `p_i` for revealed hypotheses, `p'_i` for masked ones.
    observed: Vec<f64>,
    a: usize,
    r: usize,
}

/// `min(p, 1 - p)` computed so that `p` and its floating-point mirror
/// `1.0 - p` map to the identical value.
pub fn mirror_min(p: f64) -> f64 {
    1.0 - p.max(1.0 - p)
}

/// Applies the masking rule to every hypothesis.
///
/// A hypothesis is masked when `p' <= s`, where `p' = mirror_min(p)`; masked
/// hypotheses with `p <= 0.5` count in `R` and the rest in `A`. Comparing on
/// `p'` keeps the classification invariant under `p -> 1 - p`.
pub fn mask(h: &HypothesisSet, s: &ThresholdSurface) -> MaskState {
    assert_eq!(h.len(), s.len(), "surface length must match hypothesis count");
    let n = h.len();
    let mut revealed = Vec::with_capacity(n);
    let mut pprime = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    let (mut a, mut r) = (0, 0);
    for (&p, &si) in h.pvalues().iter().zip(s.values()) {
        let m = mirror_min(p);
        pprime.push(m);
        if m <= si {
            if p <= 0.5 {
                r += 1;
            } else {
                a += 1;
            }
            revealed.push(false);
            observed.push(m);
        } else {
            revealed.push(true);
            observed.push(p);
        }
    }
    MaskState {
        surface: s.clone(),
        revealed,
        pprime,
        observed,
        a,
        r,
    }
}

/// `(1 + A) / max(R, 1)`.
pub fn compute_fdp_hat(a: usize, r: usize) -> f64 {
    (1 + a) as f64 / r.max(1) as f64
}

impl MaskState {
    pub fn len(&self) -> usize {
        self.revealed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revealed.is_empty()
    }

    pub fn surface(&self) -> &ThresholdSurface {
        &self.surface
    }

    pub fn revealed(&self) -> &[bool] {
        &self.revealed
    }

    pub fn is_masked(&self, i: usize) -> bool {
        !self.revealed[i]
    }

    pub fn pprime(&self) -> &[f64] {
        &self.pprime
    }

    /// `p` for revealed hypotheses, `p'` for masked ones.
    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    /// The revealed p-value, or `None` while masked.
    pub fn visible_value(&self, i: usize) -> Option<f64> {
        self.revealed[i].then(|| self.observed[i])
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn fdp_hat(&self) -> f64 {
        compute_fdp_hat(self.a, self.r)
    }

    pub fn masked_count(&self) -> usize {
        self.a + self.r
    }

    pub fn masked_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.revealed[i]).collect()
    }

    /// Restriction to a subset of rows. `A` and `R` are not recoverable from
    /// the visible data alone, so the subset carries zero counts.
    pub fn subset(&self, rows: &[usize]) -> MaskState {
        MaskState {
            surface: self.surface.subset(rows),
            revealed: rows.iter().map(|&i| self.revealed[i]).collect(),
            pprime: rows.iter().map(|&i| self.pprime[i]).collect(),
            observed: rows.iter().map(|&i| self.observed[i]).collect(),
            a: 0,
            r: 0,
        }
    }

    /// Visible records of the masked hypotheses, as `(index, p', s)` triples.
    pub fn masked_view(&self) -> Vec<(usize, f64, f64)> {
        self.masked_indices()
            .into_iter()
            .map(|i| (i, self.pprime[i], self.surface.get(i)))
            .collect()
    }
}

/// Largest double strictly below a positive finite `x`.
pub(crate) fn next_below(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    f64::from_bits(x.to_bits() - 1)
}
