//! Iteratively reweighted least squares with step-halving.

use nalgebra::{DMatrix, DVector};

use super::{deviance, GlmFamily, GlmFit, GlmSpec};
use crate::error::{AdaptError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Stop when `|dev - dev_old| / (|dev| + 0.1)` falls below this.
    pub tol: f64,
    /// Warm start; ignored if it produces invalid means.
    pub start: Option<Vec<f64>>,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 25,
            tol: 1e-8,
            start: None,
        }
    }
}

const MAX_HALVINGS: usize = 30;

pub(crate) fn check_inputs(x: &DMatrix<f64>, y: &[f64], w: &[f64], family: GlmFamily) -> Result<()> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(AdaptError::Dimension(format!(
            "design has {} rows, response {}, weights {}",
            x.nrows(),
            y.len(),
            w.len()
        )));
    }
    if let Some(i) = w.iter().position(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(AdaptError::InvalidArgument(format!("weight {} at row {i}", w[i])));
    }
    if let Some(i) = y
        .iter()
        .zip(w)
        .position(|(&v, &wi)| wi > 0.0 && !family.valid_response(v))
    {
        return Err(AdaptError::InvalidArgument(format!(
            "response {} at row {i} is invalid for the {:?} family",
            y[i], family
        )));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(AdaptError::InvalidArgument("all weights are zero".into()));
    }
    Ok(())
}

/// Index of an all-ones column, if any.
pub(crate) fn intercept_column(x: &DMatrix<f64>) -> Option<usize> {
    (0..x.ncols()).find(|&j| x.column(j).iter().all(|&v| v == 1.0))
}

pub(crate) fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw
}

/// Means for coefficients `beta`, or `None` if any is outside the family's range.
pub(crate) fn means(x: &DMatrix<f64>, beta: &DVector<f64>, spec: GlmSpec) -> Option<Vec<f64>> {
    let eta = x * beta;
    let mu: Vec<f64> = eta.iter().map(|&e| spec.link.inverse(e)).collect();
    mu.iter().all(|&m| spec.family.valid_mu(m)).then_some(mu)
}

/// Solves the weighted least-squares problem `min sum v_i (z_i - x_i b)^2`.
/// Returns the solution and whether a ridge term was needed.
pub(crate) fn weighted_ls(x: &DMatrix<f64>, z: &[f64], v: &[f64]) -> Result<(DVector<f64>, bool)> {
    let (n, k) = x.shape();
    let mut xs = x.clone();
    let mut zs = DVector::zeros(n);
    for i in 0..n {
        let r = v[i].sqrt();
        zs[i] = z[i] * r;
        for j in 0..k {
            xs[(i, j)] *= r;
        }
    }
    let gram = xs.tr_mul(&xs);
    let rhs = xs.tr_mul(&zs);
    if let Some(chol) = gram.clone().cholesky() {
        let b = chol.solve(&rhs);
        if b.iter().all(|v| v.is_finite()) {
            return Ok((b, false));
        }
    }
    let trace = gram.trace();
    let lambda = 1e-8 * if trace > 0.0 { trace } else { 1.0 };
    let ridged = gram + DMatrix::identity(k, k) * lambda;
    let chol = ridged
        .cholesky()
        .ok_or_else(|| AdaptError::GlmFailure("weighted Gram matrix is singular".into()))?;
    Ok((chol.solve(&rhs), true))
}

/// Working response and working weights at the means `mu`.
pub(crate) fn working(
    eta: &[f64],
    mu: &[f64],
    y: &[f64],
    w: &[f64],
    spec: GlmSpec,
) -> (Vec<f64>, Vec<f64>) {
    let mut z = Vec::with_capacity(mu.len());
    let mut v = Vec::with_capacity(mu.len());
    for i in 0..mu.len() {
        let mut d = spec.link.mu_eta(mu[i]);
        if d.abs() < 1e-300 {
            d = 1e-300_f64.copysign(d);
        }
        z.push(eta[i] + (y[i] - mu[i]) / d);
        let var = spec.family.variance(mu[i]).max(1e-300);
        v.push(w[i] * d * d / var);
    }
    (z, v)
}

/// Fits a GLM by IRLS.
///
/// Each iteration that increases the deviance or produces invalid means is
/// halved back toward the previous coefficients, so accepted deviances never
/// increase.
pub fn fit_weighted_glm(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    spec: GlmSpec,
    opts: &IrlsOptions,
) -> Result<GlmFit> {
    check_inputs(x, y, w, spec.family)?;
    // Work with weights scaled to a maximum of 1 so that rescaling all
    // weights by a constant leaves every iteration bit-identical.
    let wmax = w.iter().copied().fold(0.0, f64::max);
    let wmax = if wmax > 0.0 { wmax } else { 1.0 };
    let scaled: Vec<f64> = w.iter().map(|&wi| wi / wmax).collect();
    let w = scaled.as_slice();
    let k = x.ncols();
    let mut ridge = false;

    // Anchor used when the first step is unusable.
    let anchor = intercept_column(x).map(|j| {
        let mut b = DVector::zeros(k);
        let m = weighted_mean(y, w);
        let m = match spec.family {
            GlmFamily::Binomial => m.clamp(1e-6, 1.0 - 1e-6),
            _ => m,
        };
        b[j] = spec.link.link(m);
        b
    });

    let mut state: Option<(DVector<f64>, Vec<f64>, f64)> = opts
        .start
        .as_ref()
        .filter(|s| s.len() == k)
        .map(|s| DVector::from_column_slice(s))
        .and_then(|b| means(x, &b, spec).map(|mu| (b, mu)))
        .map(|(b, mu)| {
            let d = deviance(spec.family, y, &mu, w);
            (b, mu, d)
        });

    let (mut eta, mut mu, mut dev_old) = match &state {
        Some((b, mu, d)) => ((x * b).as_slice().to_vec(), mu.clone(), *d),
        None => {
            let mu0: Vec<f64> = y
                .iter()
                .map(|&yi| match spec.family {
                    GlmFamily::Binomial => (yi + 0.5) / 2.0,
                    _ => yi,
                })
                .collect();
            let eta0 = mu0.iter().map(|&m| spec.link.link(m)).collect();
            let d = deviance(spec.family, y, &mu0, w);
            (eta0, mu0, d)
        }
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let (z, v) = working(&eta, &mu, y, w, spec);
        let (proposal, used_ridge) = weighted_ls(x, &z, &v)?;
        ridge |= used_ridge;

        let mut candidate = proposal;
        let mut accepted = None;
        match &state {
            None => {
                if let Some(m) = means(x, &candidate, spec) {
                    accepted = Some(m);
                } else if let Some(a) = &anchor {
                    for _ in 0..MAX_HALVINGS {
                        candidate = (&candidate + a) * 0.5;
                        if let Some(m) = means(x, &candidate, spec) {
                            accepted = Some(m);
                            break;
                        }
                    }
                    if accepted.is_none() {
                        candidate = a.clone();
                        accepted = means(x, &candidate, spec);
                    }
                }
            }
            Some((prev, _, prev_dev)) => {
                for _ in 0..=MAX_HALVINGS {
                    if let Some(m) = means(x, &candidate, spec) {
                        if deviance(spec.family, y, &m, w) <= *prev_dev {
                            accepted = Some(m);
                            break;
                        }
                    }
                    candidate = (&candidate + prev) * 0.5;
                }
            }
        }

        let Some(new_mu) = accepted else {
            if state.is_some() {
                // Even a step of 2^-30 of the Newton direction fails to lower
                // the deviance: the previous iterate is stationary to working
                // precision.
                converged = true;
                break;
            }
            return Err(AdaptError::GlmFailure(
                "IRLS could not find coefficients with valid fitted means".into(),
            ));
        };
        let dev = deviance(spec.family, y, &new_mu, w);
        if !dev.is_finite() {
            return Err(AdaptError::GlmFailure("deviance is not finite".into()));
        }
        trace.push(dev);
        eta = (x * &candidate).as_slice().to_vec();
        mu = new_mu.clone();
        state = Some((candidate, new_mu, dev));
        if (dev - dev_old).abs() / (dev.abs() + 0.1) < opts.tol {
            converged = true;
            break;
        }
        dev_old = dev;
    }

    let (beta, fitted, dev) = state.ok_or_else(|| AdaptError::GlmFailure("no iterations".into()))?;
    Ok(GlmFit {
        coefficients: beta.as_slice().to_vec(),
        spec,
        fitted,
        converged,
        iterations,
        deviance: dev * wmax,
        deviance_trace: trace.into_iter().map(|d| d * wmax).collect(),
        ridge,
    })
}
