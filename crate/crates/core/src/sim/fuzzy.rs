//! Null p-value generators for mirror-conservatism checks, and a
//! Kolmogorov-Smirnov test against the uniform distribution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial as BinomialDist, DiscreteCDF};

use crate::error::{AdaptError, Result};
use crate::expfam::norm_cdf;

/// Test statistic families for randomized p-values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FuzzyFamily {
    /// `T ~ N(theta, 1)`.
    GaussianLocation,
    /// `T ~ Binomial(trials, theta)` with `theta` a success probability.
    Binomial { trials: u64 },
}

/// Sampler of `G0(T+) + U (G0(T) - G0(T+))`, where `G0(t) = P_theta0(T >= t)`
/// and `G0(T+) = P_theta0(T > T)`. For a continuous `T` this is
/// `1 - Phi(T - theta0)`.
pub fn fuzzy_mlr_pvalue(
    theta: f64,
    theta0: f64,
    family: FuzzyFamily,
) -> Result<impl FnMut(&mut ChaCha8Rng) -> f64> {
    enum Kind {
        Normal,
        Binom(Binomial, BinomialDist),
    }
    let kind = match family {
        FuzzyFamily::GaussianLocation => {
            if !(theta.is_finite() && theta0.is_finite()) {
                return Err(AdaptError::InvalidArgument("non-finite location".into()));
            }
            Kind::Normal
        }
        FuzzyFamily::Binomial { trials } => {
            let bad = |_| AdaptError::InvalidArgument(format!("binomial({trials}, {theta}, {theta0})"));
            Kind::Binom(
                Binomial::new(trials, theta).map_err(|e| bad(e.to_string()))?,
                BinomialDist::new(theta0, trials).map_err(|e| bad(e.to_string()))?,
            )
        }
    };
    Ok(move |rng: &mut ChaCha8Rng| match &kind {
        Kind::Normal => {
            let t = theta + rng.sample::<f64, _>(StandardNormal);
            norm_cdf(-(t - theta0))
        }
        Kind::Binom(draw, null) => {
            let t = draw.sample(rng);
            // P(T >= t) and P(T > t) under the null.
            let ge = if t == 0 { 1.0 } else { null.sf(t - 1) };
            let gt = null.sf(t);
            let u: f64 = rng.random();
            (gt + u * (ge - gt)).clamp(0.0, 1.0)
        }
    })
}

/// Permutation p-values on the grid `{1/m, ..., 1}`: uniform over the `m`
/// ranks, as for a test statistic exchangeable with `m - 1` permutation
/// copies.
pub fn grid_uniform_pvalue(m: usize) -> Result<impl FnMut(&mut ChaCha8Rng) -> f64> {
    if m == 0 {
        return Err(AdaptError::InvalidArgument("grid size must be positive".into()));
    }
    Ok(move |rng: &mut ChaCha8Rng| (rng.random_range(0..m) + 1) as f64 / m as f64)
}

/// One-sample Kolmogorov-Smirnov test against `U(0, 1)`.
///
/// Returns `(D, p-value)` with the asymptotic distribution and the usual
/// small-sample correction `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) D`.
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let v = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / nf - v).max(v - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    let sn = nf.sqrt();
    (d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d))
}

/// `P(K > x)` for the Kolmogorov distribution.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        sum += if k as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
