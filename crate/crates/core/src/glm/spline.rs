//! Natural cubic spline basis in truncated-power form.
//!
//! With boundary knots `xi_0 < xi_K` and interior knots `xi_1 .. xi_{K-1}`,
//! the non-constant columns are `x` and `d_k(x) - d_{K-1}(x)` for
//! `k = 0 .. K-2`, where
//! `d_k(x) = ((x - xi_k)_+^3 - (x - xi_K)_+^3) / (xi_K - xi_k)`.
//! The result is linear beyond the boundary knots.

use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};

/// A basis fitted to training data: knots at equi-quantiles of the training
/// covariate, evaluated after scaling the training range to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    lo: f64,
    scale: f64,
    /// Scaled knots, `K + 1` of them including both boundaries.
    knots: Vec<f64>,
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SplineBasis {
    /// Places `knots + 1` knots (two boundary, `knots - 1` interior) at
    /// equi-quantiles of `x`. Produces `knots` non-constant columns.
    pub fn fit(x: &[f64], knots: usize) -> Result<Self> {
        if knots < 2 {
            return Err(AdaptError::InvalidArgument(format!(
                "spline needs at least 2 knots, got {knots}"
            )));
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < knots + 4 {
            return Err(AdaptError::TooFewDistinct {
                found: distinct.len(),
                required: knots + 4,
            });
        }
        let lo = sorted[0];
        let scale = sorted[sorted.len() - 1] - lo;
        let mut placed: Vec<f64> = (0..=knots)
            .map(|k| (quantile_sorted(&sorted, k as f64 / knots as f64) - lo) / scale)
            .collect();
        placed.dedup();
        if placed.len() != knots + 1 {
            return Err(AdaptError::TooFewDistinct {
                found: placed.len(),
                required: knots + 1,
            });
        }
        Ok(Self {
            lo,
            scale,
            knots: placed,
        })
    }

    /// Number of non-constant columns.
    pub fn ncols(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Writes the non-constant columns at `x` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let u = (x - self.lo) / self.scale;
        let k = self.knots.len() - 1;
        let last = self.knots[k];
        let d = |j: usize| {
            let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
            (cube(u - self.knots[j]) - cube(u - last)) / (last - self.knots[j])
        };
        out[0] = u;
        let anchor = d(k - 1);
        for j in 0..k - 1 {
            out[j + 1] = d(j) - anchor;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols()];
        self.eval_into(x, &mut out);
        out
    }
}
