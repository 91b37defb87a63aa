//! Monte Carlo check of mirror-conservatism for a null p-value distribution.
//!
//! A null p-value is mirror-conservative when, for every `0 <= a1 <= a2 <= 0.5`,
//! `P(p in [a1, a2]) <= P(p in [1 - a2, 1 - a1])`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};

/// Widening applied to both intervals so grid points that differ from their
/// mirror image by a rounding error still land in the matching interval.
const EDGE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirrorReport {
    /// Largest estimated `P[a1, a2] - P[1 - a2, 1 - a1]` over all grid pairs.
    pub max_violation: f64,
    /// Monte Carlo standard error of `max_violation`.
    pub std_error: f64,
    /// The `[a1, a2]` pair attaining `max_violation`.
    pub interval: (f64, f64),
    /// Largest `violation / se` over all pairs (pairs with zero variance and a
    /// positive violation count as infinite).
    pub max_z: f64,
    pub bins: usize,
    pub draws: usize,
}

impl MirrorReport {
    /// True when no grid pair exceeds `k` standard errors.
    pub fn passes(&self, k: f64) -> bool {
        self.max_z <= k
    }
}

/// Estimates the worst violation of mirror-conservatism on a grid of `bins`
/// equal cells over `[0, 0.5]`, from `draws` samples of `sampler`.
pub fn mirror_conservatism_score<F>(
    mut sampler: F,
    bins: usize,
    draws: usize,
    seed: u64,
) -> Result<MirrorReport>
where
    F: FnMut(&mut ChaCha8Rng) -> f64,
{
    if bins < 2 {
        return Err(AdaptError::InvalidArgument(format!("bins = {bins}, need at least 2")));
    }
    if draws < 1000 {
        return Err(AdaptError::InvalidArgument(format!(
            "draws = {draws}, need at least 1000"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = (0..draws).map(|_| sampler(&mut rng)).collect();
    if let Some(bad) = samples.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(AdaptError::InvalidArgument(format!("sampler produced {bad}")));
    }
    samples.sort_by(f64::total_cmp);

    let count = |lo: f64, hi: f64| {
        let upper = samples.partition_point(|&x| x <= hi + EDGE_SLACK);
        let lower = samples.partition_point(|&x| x < lo - EDGE_SLACK);
        upper - lower
    };

    let n = draws as f64;
    let grid: Vec<f64> = (0..=bins).map(|k| 0.5 * k as f64 / bins as f64).collect();
    let mut report = MirrorReport {
        max_violation: f64::NEG_INFINITY,
        std_error: 0.0,
        interval: (0.0, 0.0),
        max_z: f64::NEG_INFINITY,
        bins,
        draws,
    };
    for (i, &a1) in grid.iter().enumerate() {
        for &a2 in &grid[i + 1..] {
            let low = count(a1, a2) as f64 / n;
            let high = count(1.0 - a2, 1.0 - a1) as f64 / n;
            let diff = low - high;
            // Indicator difference takes values in {-1, 0, 1}; the two
            // intervals only overlap at 0.5, where the difference is zero.
            let var = ((low + high) - diff * diff).max(0.0);
            let se = (var / n).sqrt();
            let z = if se > 0.0 {
                diff / se
            } else if diff > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if diff > report.max_violation {
                report.max_violation = diff;
                report.std_error = se;
                report.interval = (a1, a2);
            }
            report.max_z = report.max_z.max(z);
        }
    }
    Ok(report)
}
