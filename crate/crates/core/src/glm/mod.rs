//! Generalized linear models: featurization, IRLS, lasso, and selection.

mod featurize;
mod irls;
mod lasso;
mod select;
pub mod spline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::AdaptError;

pub use featurize::Featurization;
pub use irls::{fit_weighted_glm, IrlsOptions};
pub use lasso::{fit_l1_glm, CvRule, LassoFit, LassoOptions};
pub(crate) use lasso::fit_l1_fixed;
pub use select::{select_featurization, CandidateScore, Selection, SelectionCriterion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmFamily {
    /// Quasi-binomial: accepts fractional responses in `[0, 1]`.
    Binomial,
    Gamma,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Inverse,
    Log,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlmSpec {
    pub family: GlmFamily,
    pub link: Link,
}

impl GlmSpec {
    pub const LOGISTIC: GlmSpec = GlmSpec {
        family: GlmFamily::Binomial,
        link: Link::Logit,
    };

    pub fn new(family: GlmFamily, link: Link) -> Self {
        Self { family, link }
    }
}

/// Logit linear predictors are clamped here so fitted probabilities stay
/// strictly inside `(0, 1)`.
pub(crate) const LOGIT_CLAMP: f64 = 30.0;

impl Link {
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Logit => (mu / (1.0 - mu)).ln(),
            Link::Inverse => 1.0 / mu,
            Link::Log => mu.ln(),
            Link::Identity => mu,
        }
    }

    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let e = eta.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
                1.0 / (1.0 + (-e).exp())
            }
            Link::Inverse => 1.0 / eta,
            Link::Log => eta.exp(),
            Link::Identity => eta,
        }
    }

    /// `d mu / d eta` at the mean `mu`.
    pub fn mu_eta(self, mu: f64) -> f64 {
        match self {
            Link::Logit => mu * (1.0 - mu),
            Link::Inverse => -mu * mu,
            Link::Log => mu,
            Link::Identity => 1.0,
        }
    }
}

impl GlmFamily {
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            GlmFamily::Binomial => mu * (1.0 - mu),
            GlmFamily::Gamma => mu * mu,
            GlmFamily::Gaussian => 1.0,
        }
    }

    pub fn valid_mu(self, mu: f64) -> bool {
        match self {
            GlmFamily::Binomial => mu > 0.0 && mu < 1.0,
            GlmFamily::Gamma => mu > 0.0 && mu.is_finite(),
            GlmFamily::Gaussian => mu.is_finite(),
        }
    }

    pub fn valid_response(self, y: f64) -> bool {
        match self {
            GlmFamily::Binomial => (0.0..=1.0).contains(&y),
            GlmFamily::Gamma => y > 0.0 && y.is_finite(),
            GlmFamily::Gaussian => y.is_finite(),
        }
    }

    /// Unit deviance `d(y, mu)`.
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        let xlogx = |a: f64, b: f64| if a > 0.0 { a * (a / b).ln() } else { 0.0 };
        match self {
            GlmFamily::Binomial => 2.0 * (xlogx(y, mu) + xlogx(1.0 - y, 1.0 - mu)),
            GlmFamily::Gamma => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
            GlmFamily::Gaussian => (y - mu) * (y - mu),
        }
    }

    pub fn canonical_link(self) -> Link {
        match self {
            GlmFamily::Binomial => Link::Logit,
            GlmFamily::Gamma => Link::Inverse,
            GlmFamily::Gaussian => Link::Identity,
        }
    }
}

/// Weighted deviance `sum_i w_i d(y_i, mu_i)`.
pub fn deviance(family: GlmFamily, y: &[f64], mu: &[f64], w: &[f64]) -> f64 {
    y.iter()
        .zip(mu)
        .zip(w)
        .map(|((&y, &m), &w)| if w > 0.0 { w * family.unit_deviance(y, m) } else { 0.0 })
        .sum()
}

/// Result of one GLM fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub spec: GlmSpec,
    /// Fitted means.
    pub fitted: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// Deviance after each accepted iteration.
    pub deviance_trace: Vec<f64>,
    /// A ridge term was needed to factor the weighted Gram matrix.
    pub ridge: bool,
}

impl GlmFit {
    /// Fitted mean for one design row.
    pub fn predict_row(&self, row: impl IntoIterator<Item = f64>) -> f64 {
        let eta: f64 = row
            .into_iter()
            .zip(&self.coefficients)
            .map(|(x, b)| x * b)
            .sum();
        self.spec.link.inverse(eta)
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Logit => "logit",
            Link::Inverse => "inverse",
            Link::Log => "log",
            Link::Identity => "identity",
        })
    }
}

impl FromStr for Link {
    type Err = AdaptError;

    fn from_str(s: &str) -> Result<Self, AdaptError> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "inverse" => Ok(Link::Inverse),
            "log" => Ok(Link::Log),
            "identity" => Ok(Link::Identity),
            other => Err(AdaptError::InvalidConfig(format!("unknown link `{other}`"))),
        }
    }
}
