//! Shared fixtures for the benchmarks.

use adapt_core::sim::{Region, Scenario};
use adapt_core::{AdaptConfig, FeaturePair, Featurization, HypothesisSet};

/// Circle-region data on the 50 x 50 grid.
pub fn grid_data(seed: u64) -> HypothesisSet {
    Scenario::Example1 {
        region: Region::Circle,
        signal: 2.0,
    }
    .generate(seed)
    .expect("built-in scenario")
}

/// `n` uniform p-values on a regular covariate.
pub fn uniform_data(n: usize) -> HypothesisSet {
    let p: Vec<f64> = (0..n).map(|i| ((i * 7919 % n) as f64 + 0.5) / n as f64).collect();
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
    adapt_core::ingest(&p, &x).expect("valid data")
}

/// Single-candidate configuration so benchmarks time fitting, not selection.
pub fn spline_config(knots: usize) -> AdaptConfig {
    AdaptConfig {
        candidates: vec![FeaturePair::same(Featurization::NaturalSpline { knots })],
        ..AdaptConfig::default()
    }
}
