//! L1-penalized GLM by coordinate descent on the IRLS working response.
//!
//! The objective is `deviance / (2 sum w) + lambda * sum_{j>0} |gamma_j|`,
//! where `gamma` are coefficients on columns standardized with the prior
//! weights. The intercept is never penalized.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::irls::{check_inputs, intercept_column, weighted_mean, working};
use super::{deviance, GlmFamily, GlmFit, GlmSpec};
use crate::error::{AdaptError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Explicit decreasing grid; `None` builds one from `lambda_max`.
    pub lambdas: Option<Vec<f64>>,
    pub n_lambda: usize,
    /// Smallest grid value as a fraction of `lambda_max`.
    pub min_ratio: f64,
    /// Cross-validation folds; values below 2 skip CV and use the last grid value.
    pub folds: usize,
    pub seed: u64,
    pub max_outer: usize,
    pub tol: f64,
    pub rule: CvRule,
}

/// How the penalty is picked from the cross-validation curve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    /// Smallest mean held-out deviance.
    Min,
    /// Largest penalty within one standard error of the minimum.
    #[default]
    OneSe,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            lambdas: None,
            n_lambda: 20,
            min_ratio: 1e-3,
            folds: 5,
            seed: 0,
            max_outer: 25,
            tol: 1e-8,
            rule: CvRule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub fit: GlmFit,
    pub lambda: f64,
    pub path: Vec<f64>,
    /// Mean held-out deviance per unit weight for each grid value (empty
    /// without CV).
    pub cv_deviance: Vec<f64>,
    pub cv_se: Vec<f64>,
}

/// Weighted-standardized copy of the design.
struct Standardized {
    /// Column-major, non-intercept columns only.
    cols: Vec<Vec<f64>>,
    /// Original column index of each standardized column.
    index: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    intercept: usize,
    ncols: usize,
}

impl Standardized {
    fn new(x: &DMatrix<f64>, rows: &[usize], w: &[f64]) -> Result<Self> {
        let intercept = intercept_column(x).ok_or_else(|| {
            AdaptError::InvalidArgument("lasso design needs an all-ones intercept column".into())
        })?;
        let sw: f64 = rows.iter().map(|&i| w[i]).sum();
        let mut s = Standardized {
            cols: Vec::new(),
            index: Vec::new(),
            center: Vec::new(),
            scale: Vec::new(),
            intercept,
            ncols: x.ncols(),
        };
        for j in (0..x.ncols()).filter(|&j| j != intercept) {
            let col = x.column(j);
            let m = rows.iter().map(|&i| w[i] * col[i]).sum::<f64>() / sw;
            let v = rows.iter().map(|&i| w[i] * (col[i] - m).powi(2)).sum::<f64>() / sw;
            let sd = v.sqrt();
            let sd = if sd > 1e-12 { sd } else { 0.0 };
            s.cols.push(
                rows.iter()
                    .map(|&i| if sd > 0.0 { (col[i] - m) / sd } else { 0.0 })
                    .collect(),
            );
            s.index.push(j);
            s.center.push(m);
            s.scale.push(sd);
        }
        Ok(s)
    }

    fn eta(&self, g0: f64, gamma: &[f64], n: usize) -> Vec<f64> {
        let mut eta = vec![g0; n];
        for (c, &g) in self.cols.iter().zip(gamma) {
            if g != 0.0 {
                for (e, &v) in eta.iter_mut().zip(c) {
                    *e += g * v;
                }
            }
        }
        eta
    }

    /// Coefficients on the original scale.
    fn unstandardize(&self, g0: f64, gamma: &[f64]) -> Vec<f64> {
        let mut beta = vec![0.0; self.ncols];
        let mut b0 = g0;
        for k in 0..gamma.len() {
            if self.scale[k] > 0.0 {
                let b = gamma[k] / self.scale[k];
                beta[self.index[k]] = b;
                b0 -= b * self.center[k];
            }
        }
        beta[self.intercept] = b0;
        beta
    }
}

/// Coordinate descent stops when no coefficient moves the weighted residual
/// sum of squares by more than this fraction.
const INNER_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 20_000;

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

struct Problem<'a> {
    std: &'a Standardized,
    y: Vec<f64>,
    w: Vec<f64>,
    sw: f64,
    spec: GlmSpec,
}

#[derive(Clone)]
struct State {
    g0: f64,
    gamma: Vec<f64>,
}

impl Problem<'_> {
    fn means(&self, s: &State) -> Option<(Vec<f64>, Vec<f64>)> {
        let eta = self.std.eta(s.g0, &s.gamma, self.y.len());
        let mu: Vec<f64> = eta.iter().map(|&e| self.spec.link.inverse(e)).collect();
        mu.iter()
            .all(|&m| self.spec.family.valid_mu(m))
            .then_some((eta, mu))
    }

    fn objective(&self, mu: &[f64], s: &State, lambda: f64) -> f64 {
        deviance(self.spec.family, &self.y, mu, &self.w) / (2.0 * self.sw)
            + lambda * s.gamma.iter().map(|g| g.abs()).sum::<f64>()
    }

    fn null_state(&self) -> State {
        let m = weighted_mean(&self.y, &self.w);
        let m = match self.spec.family {
            GlmFamily::Binomial => m.clamp(1e-6, 1.0 - 1e-6),
            _ => m,
        };
        State {
            g0: self.spec.link.link(m),
            gamma: vec![0.0; self.std.cols.len()],
        }
    }

    fn lambda_max(&self) -> Result<f64> {
        let s = self.null_state();
        let (eta, mu) = self
            .means(&s)
            .ok_or_else(|| AdaptError::GlmFailure("null model has invalid means".into()))?;
        let (z, v) = working(&eta, &mu, &self.y, &self.w, self.spec);
        let mut best: f64 = 0.0;
        for c in &self.std.cols {
            let g: f64 = (0..z.len()).map(|i| v[i] * c[i] * (z[i] - eta[i])).sum();
            best = best.max(g.abs() / self.sw);
        }
        Ok(best)
    }

    /// Penalized IRLS at one `lambda`, warm-started from `start`.
    fn solve(&self, lambda: f64, start: State, opts: &LassoOptions) -> Result<(State, Vec<f64>, bool, usize)> {
        let n = self.y.len();
        let (mut eta, mut mu) = match self.means(&start) {
            Some(em) => em,
            None => {
                let s = self.null_state();
                return self.solve(lambda, s, opts);
            }
        };
        let mut state = start;
        let mut obj = self.objective(&mu, &state, lambda);
        let mut converged = false;
        let mut iterations = 0;
        let p = self.std.cols.len();
        for _ in 0..opts.max_outer {
            iterations += 1;
            let (z, v) = working(&eta, &mu, &self.y, &self.w, self.spec);
            let v: Vec<f64> = v.iter().map(|a| a / self.sw).collect();
            let sv: f64 = v.iter().sum();
            let xv2: Vec<f64> = self
                .std
                .cols
                .iter()
                .map(|c| c.iter().zip(&v).map(|(x, vi)| vi * x * x).sum())
                .collect();
            let mut next = state.clone();
            let mut r: Vec<f64> = (0..n).map(|i| z[i] - eta[i]).collect();
            let mut active: Vec<bool> = next.gamma.iter().map(|&g| g != 0.0).collect();
            let sweep = |next: &mut State, r: &mut [f64], only_active: bool, active: &mut [bool]| {
                let d0 = r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / sv;
                next.g0 += d0;
                r.iter_mut().for_each(|x| *x -= d0);
                let mut change = d0 * d0 * sv;
                for j in 0..p {
                    if (only_active && !active[j]) || xv2[j] == 0.0 {
                        continue;
                    }
                    let c = &self.std.cols[j];
                    let old = next.gamma[j];
                    let grad: f64 = c.iter().zip(r.iter()).zip(&v).map(|((x, ri), vi)| vi * x * ri).sum();
                    let new = soft(grad + xv2[j] * old, lambda) / xv2[j];
                    if new != old {
                        let d = new - old;
                        for (ri, x) in r.iter_mut().zip(c) {
                            *ri -= d * x;
                        }
                        next.gamma[j] = new;
                        change = change.max(d * d * xv2[j]);
                        if new != 0.0 {
                            active[j] = true;
                        }
                    }
                }
                change
            };
            // Relative to the weighted working residual; an absolute
            // tolerance can sit below rounding noise on ill-conditioned designs.
            let scale: f64 = r.iter().zip(&v).map(|(a, b)| b * a * a).sum();
            let inner_tol = (INNER_TOL * scale).max(f64::MIN_POSITIVE);
            let mut sweeps = 0;
            while sweeps < MAX_SWEEPS {
                sweeps += 1;
                if sweep(&mut next, &mut r, false, &mut active) < inner_tol {
                    break;
                }
                while sweeps < MAX_SWEEPS {
                    sweeps += 1;
                    if sweep(&mut next, &mut r, true, &mut active) < inner_tol {
                        break;
                    }
                }
            }

            // Step-halving toward the previous iterate.
            let mut accepted = None;
            let mut cand = next;
            for _ in 0..=30 {
                if let Some((e, m)) = self.means(&cand) {
                    let o = self.objective(&m, &cand, lambda);
                    if o <= obj {
                        accepted = Some((e, m, o));
                        break;
                    }
                }
                cand = State {
                    g0: 0.5 * (cand.g0 + state.g0),
                    gamma: cand.gamma.iter().zip(&state.gamma).map(|(a, b)| 0.5 * (a + b)).collect(),
                };
            }
            let Some((e, m, o)) = accepted else {
                converged = true;
                break;
            };
            let rel = (obj - o).abs() / (o.abs() + 0.1);
            state = cand;
            eta = e;
            mu = m;
            obj = o;
            if rel < opts.tol {
                converged = true;
                break;
            }
        }
        Ok((state, mu, converged, iterations))
    }
}

fn grid(lambda_max: f64, opts: &LassoOptions) -> Vec<f64> {
    if let Some(l) = &opts.lambdas {
        return l.clone();
    }
    let k = opts.n_lambda.max(1);
    if k == 1 {
        return vec![lambda_max];
    }
    (0..k)
        .map(|i| lambda_max * opts.min_ratio.powf(i as f64 / (k - 1) as f64))
        .collect()
}

fn problem<'a>(std: &'a Standardized, rows: &[usize], y: &[f64], w: &[f64], spec: GlmSpec) -> Problem<'a> {
    let yw: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let ww: Vec<f64> = rows.iter().map(|&i| w[i]).collect();
    let sw = ww.iter().sum();
    Problem {
        std,
        y: yw,
        w: ww,
        sw,
        spec,
    }
}

/// Fits an L1-penalized GLM. With `folds >= 2` the penalty is chosen by
/// K-fold cross-validated deviance over the grid; otherwise the last grid
/// value is used.
pub fn fit_l1_glm(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    spec: GlmSpec,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    check_inputs(x, y, w, spec.family)?;
    let n = y.len();
    let all: Vec<usize> = (0..n).collect();
    let std = Standardized::new(x, &all, w)?;
    let full = problem(&std, &all, y, w, spec);
    let path = grid(full.lambda_max()?, opts);
    if path.is_empty() {
        return Err(AdaptError::InvalidArgument("empty lambda grid".into()));
    }

    let (cv_deviance, cv_se, chosen) = if opts.folds >= 2 && path.len() > 1 {
        let k = opts.folds.min(n);
        let mut order = all.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
        let mut fold_of = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % k;
        }
        let mut per_fold = vec![vec![0.0; path.len()]; k];
        for (f, scores) in per_fold.iter_mut().enumerate() {
            let train: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] == f).collect();
            let std_f = Standardized::new(x, &train, w)?;
            let prob = problem(&std_f, &train, y, w, spec);
            let mut state = prob.null_state();
            let wt: f64 = test.iter().map(|&i| w[i]).sum::<f64>().max(f64::MIN_POSITIVE);
            for (li, &lambda) in path.iter().enumerate() {
                let (s, _, _, _) = prob.solve(lambda, state, opts)?;
                let beta = std_f.unstandardize(s.g0, &s.gamma);
                let dev: f64 = test
                    .iter()
                    .map(|&i| {
                        let eta: f64 = x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
                        let m = spec.link.inverse(eta);
                        if spec.family.valid_mu(m) {
                            w[i] * spec.family.unit_deviance(y[i], m)
                        } else {
                            f64::INFINITY
                        }
                    })
                    .sum();
                scores[li] = dev / wt;
                state = s;
            }
        }
        let mut mean = vec![0.0; path.len()];
        let mut se = vec![0.0; path.len()];
        for li in 0..path.len() {
            let vals: Vec<f64> = per_fold.iter().map(|s| s[li]).collect();
            let m = vals.iter().sum::<f64>() / k as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k as f64 - 1.0).max(1.0);
            mean[li] = m;
            se[li] = (var / k as f64).sqrt();
        }
        let best = (0..path.len())
            .min_by(|&a, &b| mean[a].total_cmp(&mean[b]))
            .unwrap_or(path.len() - 1);
        let best = match opts.rule {
            CvRule::Min => best,
            CvRule::OneSe => (0..=best)
                .find(|&li| mean[li] <= mean[best] + se[best])
                .unwrap_or(best),
        };
        (mean, se, best)
    } else {
        (Vec::new(), Vec::new(), path.len() - 1)
    };

    let mut state = full.null_state();
    let mut result = None;
    for &lambda in &path[..=chosen] {
        let out = full.solve(lambda, state, opts)?;
        state = out.0.clone();
        result = Some(out);
    }
    let (s, mu, converged, iterations) = result.expect("grid is non-empty");
    let beta = std.unstandardize(s.g0, &s.gamma);
    let dev = deviance(spec.family, y, &mu, w);
    Ok(LassoFit {
        fit: GlmFit {
            coefficients: beta,
            spec,
            fitted: mu,
            converged,
            iterations,
            deviance: dev,
            deviance_trace: vec![dev],
            ridge: false,
        },
        lambda: path[chosen],
        path,
        cv_deviance,
        cv_se,
    })
}

/// Refits at a fixed penalty, warm-started from original-scale coefficients.
pub(crate) fn fit_l1_fixed(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    spec: GlmSpec,
    lambda: f64,
    start: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<GlmFit> {
    check_inputs(x, y, w, spec.family)?;
    let all: Vec<usize> = (0..y.len()).collect();
    let std = Standardized::new(x, &all, w)?;
    let prob = problem(&std, &all, y, w, spec);
    let init = match start {
        Some(beta) if beta.len() == x.ncols() => {
            let gamma: Vec<f64> = std
                .index
                .iter()
                .zip(&std.scale)
                .map(|(&j, &sd)| beta[j] * sd)
                .collect();
            let g0 = beta[std.intercept]
                + std
                    .index
                    .iter()
                    .zip(&std.center)
                    .map(|(&j, &m)| beta[j] * m)
                    .sum::<f64>();
            State { g0, gamma }
        }
        _ => prob.null_state(),
    };
    let (s, mu, converged, iterations) = prob.solve(lambda, init, opts)?;
    let dev = deviance(spec.family, y, &mu, w);
    Ok(GlmFit {
        coefficients: std.unstandardize(s.g0, &s.gamma),
        spec,
        fitted: mu,
        converged,
        iterations,
        deviance: dev,
        deviance_trace: vec![dev],
        ridge: false,
    })
}
