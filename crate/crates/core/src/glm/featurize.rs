//! Covariate featurizations and their design matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spline::SplineBasis;
use crate::data::HypothesisSet;
use crate::error::{AdaptError, Result};

/// How covariates enter a GLM. Every featurization includes an intercept.
///
/// Multivariate covariates get an additive spline per column.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurization {
    Intercept,
    Identity,
    NaturalSpline { knots: usize },
    Subset { indices: Vec<usize> },
    /// Products of per-column spline bases, each extended by a constant;
    /// at most [`MAX_TENSOR_DIM`] columns.
    TensorSpline { knots: usize },
}

pub const MAX_TENSOR_DIM: usize = 3;

impl Featurization {
    /// Degrees of freedom including the intercept, for `dim` covariate columns.
    pub fn df(&self, dim: usize) -> usize {
        match self {
            Featurization::Intercept => 1,
            Featurization::Identity => dim + 1,
            Featurization::NaturalSpline { knots } => dim * knots + 1,
            Featurization::Subset { indices } => indices.len() + 1,
            Featurization::TensorSpline { knots } => (knots + 1).pow(dim as u32),
        }
    }

    /// Design matrix over every hypothesis; column 0 is the intercept.
    pub fn design(&self, h: &HypothesisSet) -> Result<DMatrix<f64>> {
        let n = h.len();
        let dim = h.dim();
        match self {
            Featurization::Intercept => Ok(DMatrix::from_element(n, 1, 1.0)),
            Featurization::Identity => Ok(DMatrix::from_fn(n, dim + 1, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    h.covariate(i)[j - 1]
                }
            })),
            Featurization::Subset { indices } => {
                if let Some(&bad) = indices.iter().find(|&&j| j >= dim) {
                    return Err(AdaptError::Dimension(format!(
                        "subset index {bad} but covariates have {dim} columns"
                    )));
                }
                Ok(DMatrix::from_fn(n, indices.len() + 1, |i, j| {
                    if j == 0 {
                        1.0
                    } else {
                        h.covariate(i)[indices[j - 1]]
                    }
                }))
            }
            Featurization::NaturalSpline { knots } => {
                let mut m = DMatrix::from_element(n, dim * knots + 1, 1.0);
                let mut row = vec![0.0; *knots];
                for c in 0..dim {
                    let col = h.column(c);
                    let basis = SplineBasis::fit(&col, *knots)?;
                    for (i, &x) in col.iter().enumerate() {
                        basis.eval_into(x, &mut row);
                        for (k, &v) in row.iter().enumerate() {
                            m[(i, 1 + c * knots + k)] = v;
                        }
                    }
                }
                Ok(m)
            }
            Featurization::TensorSpline { knots } => {
                if dim > MAX_TENSOR_DIM {
                    return Err(AdaptError::Dimension(format!(
                        "tensor splines need at most {MAX_TENSOR_DIM} covariate columns, found {dim}"
                    )));
                }
                let width = knots + 1;
                // Per-column bases with a leading constant.
                let mut marginal = Vec::with_capacity(dim);
                for c in 0..dim {
                    let col = h.column(c);
                    let basis = SplineBasis::fit(&col, *knots)?;
                    let mut b = DMatrix::from_element(n, width, 1.0);
                    let mut row = vec![0.0; *knots];
                    for (i, &x) in col.iter().enumerate() {
                        basis.eval_into(x, &mut row);
                        for (k, &v) in row.iter().enumerate() {
                            b[(i, 1 + k)] = v;
                        }
                    }
                    marginal.push(b);
                }
                let cols = width.pow(dim as u32);
                Ok(DMatrix::from_fn(n, cols, |i, j| {
                    let mut rest = j;
                    let mut v = 1.0;
                    for b in &marginal {
                        v *= b[(i, rest % width)];
                        rest /= width;
                    }
                    v
                }))
            }
        }
    }

    /// Stable identifier, parseable by `FromStr`.
    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Featurization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Featurization::Intercept => f.write_str("intercept"),
            Featurization::Identity => f.write_str("identity"),
            Featurization::NaturalSpline { knots } => write!(f, "spline:{knots}"),
            Featurization::TensorSpline { knots } => write!(f, "tensor:{knots}"),
            Featurization::Subset { indices } => {
                let list: Vec<String> = indices.iter().map(usize::to_string).collect();
                write!(f, "subset:{}", list.join(","))
            }
        }
    }
}

impl FromStr for Featurization {
    type Err = AdaptError;

    /// Accepts `intercept`, `identity`, `spline:K`, `tensor:K` and
    /// `subset:i,j,..`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || AdaptError::UnknownFeaturization(s.to_string());
        let s = s.trim();
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        match (head, tail) {
            ("intercept", None) => Ok(Featurization::Intercept),
            ("identity", None) => Ok(Featurization::Identity),
            ("spline", Some(k)) => {
                let knots = k.trim().parse().map_err(|_| unknown())?;
                Ok(Featurization::NaturalSpline { knots })
            }
            ("tensor", Some(k)) => {
                let knots = k.trim().parse().map_err(|_| unknown())?;
                Ok(Featurization::TensorSpline { knots })
            }
            ("subset", Some(list)) => {
                let indices = list
                    .split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| unknown())?;
                if indices.is_empty() {
                    return Err(unknown());
                }
                Ok(Featurization::Subset { indices })
            }
            _ => Err(unknown()),
        }
    }
}
