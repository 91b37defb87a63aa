//! Reference procedures: Benjamini-Hochberg, Storey-BH and Barber-Candès.

use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};
use crate::masking::{compute_fdp_hat, mirror_min};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method: String,
    /// Rejected indices, ascending.
    pub rejections: Vec<usize>,
    /// p-value cutoff (BH, Storey) or constant threshold (Barber-Candès).
    pub threshold: f64,
}

fn check(pvalues: &[f64], alpha: f64) -> Result<()> {
    if let Some(i) = pvalues.iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(AdaptError::PValueOutOfRange {
            index: i,
            value: pvalues[i],
        });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AdaptError::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    Ok(())
}

fn step_up(pvalues: &[f64], level: f64, method: &str) -> BaselineResult {
    let n = pvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let k = (1..=n)
        .rev()
        .find(|&k| pvalues[order[k - 1]] <= k as f64 * level / n as f64)
        .unwrap_or(0);
    let threshold = if k == 0 { 0.0 } else { pvalues[order[k - 1]] };
    let mut rejections: Vec<usize> = (0..n).filter(|&i| k > 0 && pvalues[i] <= threshold).collect();
    rejections.sort_unstable();
    BaselineResult {
        method: method.into(),
        rejections,
        threshold,
    }
}

/// Step-up rule: reject the `k*` smallest p-values with
/// `k* = max{k : p_(k) <= k alpha / n}`.
pub fn bh(pvalues: &[f64], alpha: f64) -> Result<BaselineResult> {
    check(pvalues, alpha)?;
    Ok(step_up(pvalues, alpha, "bh"))
}

/// `pi0 = (1 + #{p > lambda}) / (n (1 - lambda))`, capped at 1.
pub fn storey_pi0(pvalues: &[f64], lambda: f64) -> f64 {
    let above = pvalues.iter().filter(|&&p| p > lambda).count();
    ((1 + above) as f64 / (pvalues.len() as f64 * (1.0 - lambda))).min(1.0)
}

/// BH at level `alpha / pi0` with Storey's null-proportion estimate.
pub fn storey_bh(pvalues: &[f64], alpha: f64, lambda: f64) -> Result<BaselineResult> {
    check(pvalues, alpha)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(AdaptError::InvalidArgument(format!("lambda = {lambda} must lie in (0, 1)")));
    }
    if pvalues.is_empty() {
        return Ok(step_up(pvalues, alpha, "storey"));
    }
    let pi0 = storey_pi0(pvalues, lambda);
    Ok(step_up(pvalues, alpha / pi0, "storey"))
}

/// Largest constant threshold `s` among the `p'` values with
/// `(1 + #{p >= 1 - s}) / max(#{p <= s}, 1) <= alpha`; rejects `{p <= s}`.
///
/// Hypotheses are classified exactly as the masking rule does, on
/// `p' = mirror_min(p)`, so the result matches the adaptive procedure run
/// with a constant threshold.
pub fn barber_candes(pvalues: &[f64], alpha: f64) -> Result<BaselineResult> {
    check(pvalues, alpha)?;
    // (p', below half) sorted by decreasing p'.
    let mut items: Vec<(f64, bool)> = pvalues.iter().map(|&p| (mirror_min(p), p <= 0.5)).collect();
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut r = items.iter().filter(|it| it.1).count();
    let mut a = items.len() - r;
    let mut idx = 0;
    let mut chosen = None;
    while idx < items.len() {
        let s = items[idx].0;
        if s <= 0.5 && compute_fdp_hat(a, r) <= alpha {
            chosen = Some(s);
            break;
        }
        // Drop every hypothesis with this p'.
        while idx < items.len() && items[idx].0 == s {
            if items[idx].1 {
                r -= 1;
            } else {
                a -= 1;
            }
            idx += 1;
        }
    }
    let (rejections, threshold) = match chosen {
        Some(s) => (
            (0..pvalues.len())
                .filter(|&i| pvalues[i] <= 0.5 && mirror_min(pvalues[i]) <= s)
                .collect(),
            s,
        ),
        None => (Vec::new(), 0.0),
    };
    Ok(BaselineResult {
        method: "bc".into(),
        rejections,
        threshold,
    })
}
