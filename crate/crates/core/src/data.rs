//! Hypothesis records: covariates, p-values and (for simulations) ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};

/// Smallest p-value kept after ingestion; `1 - P_MIN` is the largest.
pub const P_MIN: f64 = 1e-15;

/// Immutable covariate/p-value records.
///
/// Covariates are stored row-major in a flat buffer with `dim` columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    dim: usize,
    covariates: Vec<f64>,
    pvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Vec<bool>>,
}

/// Validates and clamps raw inputs into a [`HypothesisSet`].
pub fn ingest(raw_pvalues: &[f64], covariates: &[Vec<f64>]) -> Result<HypothesisSet> {
    if raw_pvalues.len() != covariates.len() {
        return Err(AdaptError::LengthMismatch {
            pvalues: raw_pvalues.len(),
            covariates: covariates.len(),
        });
    }
    let dim = covariates.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(dim * covariates.len());
    for (row, x) in covariates.iter().enumerate() {
        if x.len() != dim {
            return Err(AdaptError::RaggedCovariates {
                row,
                found: x.len(),
                expected: dim,
            });
        }
        flat.extend_from_slice(x);
    }
    HypothesisSet::from_flat(raw_pvalues, flat, dim)
}

impl HypothesisSet {
    /// Builds a set from a flat row-major covariate buffer.
    pub fn from_flat(raw_pvalues: &[f64], covariates: Vec<f64>, dim: usize) -> Result<Self> {
        let n = raw_pvalues.len();
        if covariates.len() != n * dim {
            return Err(AdaptError::LengthMismatch {
                pvalues: n,
                covariates: if dim == 0 { 0 } else { covariates.len() / dim },
            });
        }
        if let Some(pos) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(AdaptError::NonFiniteCovariate {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut pvalues = Vec::with_capacity(n);
        for (index, &value) in raw_pvalues.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(AdaptError::PValueOutOfRange { index, value });
            }
            pvalues.push(value.clamp(P_MIN, 1.0 - P_MIN));
        }
        Ok(Self {
            dim,
            covariates,
            pvalues,
            truth: None,
        })
    }

    /// Attaches ground-truth labels (`true` = non-null).
    pub fn with_truth(mut self, truth: Vec<bool>) -> Result<Self> {
        if truth.len() != self.len() {
            return Err(AdaptError::Dimension(format!(
                "{} truth labels for {} hypotheses",
                truth.len(),
                self.len()
            )));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.pvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pvalues.is_empty()
    }

    /// Number of covariate columns.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pvalues(&self) -> &[f64] {
        &self.pvalues
    }

    pub fn covariate(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.dim..(i + 1) * self.dim]
    }

    pub fn covariates_flat(&self) -> &[f64] {
        &self.covariates
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.covariates[i * self.dim + j]).collect()
    }

    /// Ground truth, `true` for non-null hypotheses.
    pub fn truth(&self) -> Option<&[bool]> {
        self.truth.as_deref()
    }

    /// A copy with `p_i` replaced by `1 - p_i` at the given indices.
    pub fn flipped(&self, indices: &[usize]) -> Self {
        let mut out = self.clone();
        for &i in indices {
            out.pvalues[i] = 1.0 - self.pvalues[i];
        }
        out
    }

    /// A copy restricted to the given rows, in order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut covariates = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            covariates.extend_from_slice(self.covariate(i));
        }
        Self {
            dim: self.dim,
            covariates,
            pvalues: rows.iter().map(|&i| self.pvalues[i]).collect(),
            truth: self
                .truth
                .as_ref()
                .map(|t| rows.iter().map(|&i| t[i]).collect()),
        }
    }
}
