//! Simulation studies: data generators with known truth, scoring, a
//! replicate harness, and generators for property checks.

pub mod fuzzy;
pub mod lemma2;
pub mod scenarios;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{barber_candes, bh, storey_bh};
use crate::data::HypothesisSet;
use crate::engine::{run_adapt, AdaptConfig};
use crate::error::{AdaptError, Result};

pub use fuzzy::{fuzzy_mlr_pvalue, grid_uniform_pvalue, ks_uniform, FuzzyFamily};
pub use lemma2::{lemma2_check, lemma2_check_exact, Lemma2Report, ShrinkRule, StopRule};
pub use scenarios::{example1_grid, generate_example1, solve_intercept, Example2, Region, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// `|R ∩ H0| / |R|`, zero for an empty rejection set.
    pub fdp: f64,
    /// `|R ∩ H1| / |H1|`; `None` when there are no non-nulls.
    pub power: Option<f64>,
}

/// False discovery proportion and power of a rejection set.
pub fn score(rejections: &[usize], truth: &[bool]) -> Result<Score> {
    if let Some(&i) = rejections.iter().find(|&&i| i >= truth.len()) {
        return Err(AdaptError::InvalidArgument(format!("rejection index {i} out of range")));
    }
    let true_pos = rejections.iter().filter(|&&i| truth[i]).count();
    let false_pos = rejections.len() - true_pos;
    let alts = truth.iter().filter(|&&t| t).count();
    Ok(Score {
        fdp: false_pos as f64 / rejections.len().max(1) as f64,
        power: (alts > 0).then(|| true_pos as f64 / alts as f64),
    })
}

/// A procedure evaluated by [`run_replicates`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Full adaptive run; rejections at each level come from the q-values.
    Adapt { label: String, config: Box<AdaptConfig> },
    Bh,
    Storey { lambda: f64 },
    BarberCandes,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Adapt { label, .. } => label.clone(),
            Method::Bh => "bh".into(),
            Method::Storey { .. } => "storey".into(),
            Method::BarberCandes => "bc".into(),
        }
    }

    /// Rejection sets at every level in `alphas`.
    pub fn rejections(&self, h: &HypothesisSet, alphas: &[f64]) -> Result<Vec<Vec<usize>>> {
        let p = h.pvalues();
        match self {
            Method::Adapt { config, .. } => {
                let config = AdaptConfig {
                    alpha: None,
                    ..(**config).clone()
                };
                let res = run_adapt(h, &config)?;
                alphas
                    .iter()
                    .map(|&a| res.rejections_at(a).ok_or(AdaptError::IncompleteTrace(0)))
                    .collect()
            }
            Method::Bh => alphas.iter().map(|&a| Ok(bh(p, a)?.rejections)).collect(),
            Method::Storey { lambda } => alphas.iter().map(|&a| Ok(storey_bh(p, a, *lambda)?.rejections)).collect(),
            Method::BarberCandes => alphas.iter().map(|&a| Ok(barber_candes(p, a)?.rejections)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub rep: usize,
    pub seed: u64,
    pub method: String,
    pub alpha: f64,
    pub rejections: usize,
    pub fdp: f64,
    pub power: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub alpha: f64,
    pub reps: usize,
    pub mean_fdp: f64,
    pub se_fdp: f64,
    /// Averages over replicates with at least one non-null.
    pub mean_power: Option<f64>,
    pub se_power: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub outcomes: Vec<Outcome>,
    pub summary: Vec<Summary>,
}

impl SimulationReport {
    pub fn summary_for(&self, method: &str, alpha: f64) -> Option<&Summary> {
        self.summary.iter().find(|s| s.method == method && s.alpha == alpha)
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Seed of replicate `rep` under base seed `seed`.
pub fn replicate_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(rep as u64)
}

/// Runs every method on `reps` independent data sets in parallel.
///
/// Replicate `r` uses data seed [`replicate_seed`]`(seed, r)`; outcomes are
/// ordered by replicate, method and level regardless of scheduling.
pub fn run_replicates(
    scenario: &Scenario,
    methods: &[Method],
    alphas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if methods.is_empty() || alphas.is_empty() || reps == 0 {
        return Err(AdaptError::InvalidArgument("need at least one method, level and replicate".into()));
    }
    if let Some(a) = alphas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
        return Err(AdaptError::InvalidArgument(format!("alpha = {a} must lie in (0, 1]")));
    }
    let per_rep: Vec<Vec<Outcome>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let data_seed = replicate_seed(seed, rep);
            let h = scenario.generate(data_seed)?;
            let truth = h.truth().ok_or_else(|| AdaptError::InvalidArgument("scenario without truth".into()))?;
            let mut out = Vec::with_capacity(methods.len() * alphas.len());
            for m in methods {
                for (&alpha, rej) in alphas.iter().zip(m.rejections(&h, alphas)?) {
                    let s = score(&rej, truth)?;
                    out.push(Outcome {
                        rep,
                        seed: data_seed,
                        method: m.label(),
                        alpha,
                        rejections: rej.len(),
                        fdp: s.fdp,
                        power: s.power,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let outcomes: Vec<Outcome> = per_rep.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for m in methods {
        let label = m.label();
        for &alpha in alphas {
            let rows: Vec<&Outcome> = outcomes.iter().filter(|o| o.method == label && o.alpha == alpha).collect();
            let fdp: Vec<f64> = rows.iter().map(|o| o.fdp).collect();
            let power: Vec<f64> = rows.iter().filter_map(|o| o.power).collect();
            let (mean_fdp, se_fdp) = mean_se(&fdp);
            let pw = (!power.is_empty()).then(|| mean_se(&power));
            summary.push(Summary {
                method: label.clone(),
                alpha,
                reps: rows.len(),
                mean_fdp,
                se_fdp,
                mean_power: pw.map(|p| p.0),
                se_power: pw.map(|p| p.1),
            });
        }
    }
    Ok(SimulationReport {
        scenario: scenario.clone(),
        outcomes,
        summary,
    })
}
