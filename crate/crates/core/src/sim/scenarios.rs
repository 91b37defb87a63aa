//! Synthetic data sets with known truth.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::HypothesisSet;
use crate::error::{AdaptError, Result};
use crate::expfam::norm_cdf;

/// Grid side length for the two-dimensional example.
pub const GRID_SIDE: usize = 50;

/// Non-null regions on `[-100, 100]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Disc of radius 30 at the origin.
    Circle,
    /// Ellipse with semi-axes 50 and 20, rotated by 30 degrees.
    Ellipse,
    /// Annulus with radii 40 and 55.
    Ring,
    /// No non-nulls.
    Empty,
}

impl Region {
    pub fn contains(self, x: f64, y: f64) -> bool {
        match self {
            Region::Circle => x * x + y * y <= 30.0 * 30.0,
            Region::Ellipse => {
                let (s, c) = std::f64::consts::FRAC_PI_6.sin_cos();
                let u = c * x + s * y;
                let v = -s * x + c * y;
                (u / 50.0).powi(2) + (v / 20.0).powi(2) <= 1.0
            }
            Region::Ring => {
                let r2 = x * x + y * y;
                (40.0 * 40.0..=55.0 * 55.0).contains(&r2)
            }
            Region::Empty => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Circle => "circle",
            Region::Ellipse => "ellipse",
            Region::Ring => "ring",
            Region::Empty => "null",
        }
    }
}

/// Equi-spaced `GRID_SIDE x GRID_SIDE` grid over `[-100, 100]^2`, row-major.
pub fn example1_grid() -> Vec<[f64; 2]> {
    let step = 200.0 / (GRID_SIDE - 1) as f64;
    let coord = |k: usize| -100.0 + step * k as f64;
    (0..GRID_SIDE)
        .flat_map(|i| (0..GRID_SIDE).map(move |j| [coord(i), coord(j)]))
        .collect()
}

/// One-sided normal tests on the grid: `z ~ N(signal, 1)` inside the
/// region, `N(0, 1)` outside, and `p = 1 - Phi(z)`.
pub fn generate_example1(region: Region, signal: f64, seed: u64) -> HypothesisSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = example1_grid();
    let mut p = Vec::with_capacity(grid.len());
    let mut truth = Vec::with_capacity(grid.len());
    let mut cov = Vec::with_capacity(2 * grid.len());
    for [x, y] in grid {
        let alt = region.contains(x, y);
        let z: f64 = rng.sample::<f64, _>(StandardNormal) + if alt { signal } else { 0.0 };
        p.push(norm_cdf(-z));
        truth.push(alt);
        cov.extend([x, y]);
    }
    HypothesisSet::from_flat(&p, cov, 2)
        .and_then(|h| h.with_truth(truth))
        .expect("generated data are valid")
}

fn mean_sigmoid(lin: &[f64], theta0: f64) -> f64 {
    lin.iter().map(|&l| 1.0 / (1.0 + (-(theta0 + l)).exp())).sum::<f64>() / lin.len() as f64
}

/// `theta0` with `mean_i sigmoid(theta0 + lin_i) = target`, by bisection.
pub fn solve_intercept(lin: &[f64], target: f64) -> Result<f64> {
    if lin.is_empty() || !(target > 0.0 && target < 1.0) {
        return Err(AdaptError::InvalidArgument("intercept target must lie in (0, 1)".into()));
    }
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_sigmoid(lin, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Parameters of the high-dimensional beta-mixture example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example2 {
    pub n: usize,
    pub d: usize,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean_pi: f64,
}

impl Example2 {
    pub fn new(n: usize, d: usize) -> Self {
        let sparse = |v: f64| (0..d).map(|j| if j < 2 { v } else { 0.0 }).collect();
        Self {
            n,
            d,
            theta: sparse(3.0),
            beta: sparse(2.0),
            mean_pi: 0.3,
        }
    }

    /// Data set and the solved intercept `theta0`.
    ///
    /// `x_ij ~ U(0, 1)`, `logit pi_i = theta0 + x_i' theta`,
    /// `mu_i = max(x_i' beta, 1)`, and non-null `p = U^mu` so that
    /// `E[-ln p] = mu`.
    pub fn generate(&self, seed: u64) -> Result<(HypothesisSet, f64)> {
        if self.n == 0 || self.theta.len() != self.d || self.beta.len() != self.d {
            return Err(AdaptError::InvalidArgument("inconsistent example parameters".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..self.n * self.d).map(|_| rng.random()).collect();
        let dot = |row: usize, w: &[f64]| -> f64 {
            x[row * self.d..(row + 1) * self.d].iter().zip(w).map(|(a, b)| a * b).sum()
        };
        let lin: Vec<f64> = (0..self.n).map(|i| dot(i, &self.theta)).collect();
        let theta0 = solve_intercept(&lin, self.mean_pi)?;
        let mut p = Vec::with_capacity(self.n);
        let mut truth = Vec::with_capacity(self.n);
        for (i, l) in lin.iter().enumerate() {
            let pi = 1.0 / (1.0 + (-(theta0 + l)).exp());
            let mu = dot(i, &self.beta).max(1.0);
            let alt = rng.random::<f64>() < pi;
            let u: f64 = rng.random();
            p.push(if alt { u.powf(mu) } else { u });
            truth.push(alt);
        }
        let h = HypothesisSet::from_flat(&p, x, self.d)?.with_truth(truth)?;
        Ok((h, theta0))
    }
}

/// Named simulation scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    Example1 {
        region: Region,
        #[serde(default = "default_signal")]
        signal: f64,
    },
    Example2 {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_d")]
        d: usize,
    },
}

fn default_signal() -> f64 {
    2.0
}

fn default_n() -> usize {
    3000
}

fn default_d() -> usize {
    100
}

impl Scenario {
    pub fn generate(&self, seed: u64) -> Result<HypothesisSet> {
        match self {
            Scenario::Example1 { region, signal } => Ok(generate_example1(*region, *signal, seed)),
            Scenario::Example2 { n, d } => Example2::new(*n, *d).generate(seed).map(|(h, _)| h),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Example1 { region, .. } => write!(f, "example1-{}", region.name()),
            Scenario::Example2 { .. } => f.write_str("example2"),
        }
    }
}

impl FromStr for Scenario {
    type Err = AdaptError;

    fn from_str(s: &str) -> Result<Self> {
        let region = match s {
            "example1-circle" => Some(Region::Circle),
            "example1-ellipse" => Some(Region::Ellipse),
            "example1-ring" => Some(Region::Ring),
            "example1-null" => Some(Region::Empty),
            _ => None,
        };
        if let Some(region) = region {
            return Ok(Scenario::Example1 {
                region,
                signal: default_signal(),
            });
        }
        if s == "example2" {
            return Ok(Scenario::Example2 {
                n: default_n(),
                d: default_d(),
            });
        }
        Err(AdaptError::UnknownScenario(s.to_string()))
    }
}
