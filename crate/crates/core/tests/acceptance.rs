//! End-to-end acceptance checks. Runs as a plain binary so each criterion
//! prints one PASS/FAIL line in order; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use adapt_core::baselines::barber_candes;
use adapt_core::em::{e_step, run_em, MuFitMode, Penalty};
use adapt_core::engine::info_loss_correlation;
use adapt_core::expfam::norm_quantile;
use adapt_core::mirror::mirror_conservatism_score;
use adapt_core::sim::{
    fuzzy_mlr_pvalue, grid_uniform_pvalue, lemma2_check, run_replicates, FuzzyFamily, Method, Region,
    Scenario, ShrinkRule, StopRule,
};
use adapt_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::result::Result;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn example1_config() -> AdaptConfig {
    // Beta mixture, additive natural splines with 6, 8 or 10 knots by BIC.
    AdaptConfig::default()
}

fn circle() -> Scenario {
    Scenario::Example1 {
        region: Region::Circle,
        signal: 2.0,
    }
}

fn example1_report() -> &'static adapt_core::sim::SimulationReport {
    use std::sync::OnceLock;
    static REPORT: OnceLock<adapt_core::sim::SimulationReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let methods = [
            Method::Adapt {
                label: "adapt".into(),
                config: Box::new(example1_config()),
            },
            Method::Bh,
            Method::Storey { lambda: 0.5 },
        ];
        run_replicates(&circle(), &methods, &[0.05, 0.1, 0.2], 100, 2024).expect("example 1 replicates")
    })
}

fn fdr_control() -> Result<String, String> {
    let report = example1_report();
    let mut parts = Vec::new();
    for alpha in [0.05, 0.1, 0.2] {
        let s = report.summary_for("adapt", alpha).ok_or("missing summary")?;
        parts.push(format!("alpha={alpha}: {:.4}±{:.4}", s.mean_fdp, s.se_fdp));
        ensure(s.mean_fdp <= alpha + 2.0 * s.se_fdp, || {
            format!("mean FDP {:.4} > {alpha} + 2 SE ({:.4})", s.mean_fdp, s.se_fdp)
        })?;
    }
    Ok(format!("mean FDP over 100 reps: {}", parts.join(", ")))
}

fn power_ordering() -> Result<String, String> {
    let report = example1_report();
    let power = |m: &str| report.summary_for(m, 0.1).and_then(|s| s.mean_power).ok_or("missing power");
    let (a, b, st) = (power("adapt")?, power("bh")?, power("storey")?);
    let gap = a - b.max(st);
    ensure(gap >= 0.02, || format!("adapt {a:.4} vs bh {b:.4}, storey {st:.4}"))?;
    Ok(format!("power at 0.1: adapt {a:.4}, bh {b:.4}, storey {st:.4}, gap {gap:.4}"))
}

fn bc_equivalence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0;
    for case in 0..50 {
        let n = rng.random_range(5..400);
        let pi = rng.random_range(0.0..0.5);
        let mu: f64 = rng.random_range(1.0..8.0);
        let ties = case % 5 == 0;
        let p: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let v = if rng.random::<f64>() < pi { u.powf(mu) } else { u };
                if ties { (v * 40.0).ceil() / 40.0 } else { v }
            })
            .collect();
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let h = ingest(&p, &x).map_err(|e| e.to_string())?;
        let alpha = rng.random_range(0.05..0.5);
        let cfg = AdaptConfig {
            s0: 0.5,
            alpha: Some(alpha),
            strategy: StrategyKind::ConstantThreshold,
            candidates: vec![FeaturePair::same(Featurization::Intercept)],
            ..AdaptConfig::default()
        };
        let res = run_adapt(&h, &cfg).map_err(|e| e.to_string())?;
        let bc = barber_candes(h.pvalues(), alpha).map_err(|e| e.to_string())?;
        ensure(res.rejections == bc.rejections, || {
            format!("case {case}: adapt {} vs bc {} rejections", res.rejections.len(), bc.rejections.len())
        })?;
        total += bc.rejections.len();
    }
    Ok(format!("50 inputs identical ({total} rejections in total)"))
}

fn log_density(family: Family, p: f64, mu: f64) -> f64 {
    match family {
        Family::Beta => -mu.ln() + (1.0 / mu - 1.0) * p.ln(),
        Family::Gaussian => {
            let z = norm_quantile(1.0 - p);
            mu * z - 0.5 * mu * mu
        }
    }
}

fn suff_stat(family: Family, p: f64) -> f64 {
    match family {
        Family::Beta => -p.ln(),
        Family::Gaussian => norm_quantile(1.0 - p),
    }
}

fn e_step_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for family in [Family::Beta, Family::Gaussian] {
        let n = 500;
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(1e-9..1.0)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=0.5)).collect();
        let pi: Vec<f64> = (0..n).map(|_| rng.random_range(1e-4..1.0 - 1e-4)).collect();
        let mu: Vec<f64> = (0..n).map(|_| family.null_mu() + rng.random_range(0.01..6.0)).collect();
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let h = ingest(&p, &x).map_err(|e| e.to_string())?;
        let m = mask(&h, &ThresholdSurface::new(s).map_err(|e| e.to_string())?);
        let fit = TwoGroupsFit::from_params(family, pi.clone(), mu.clone());
        let e = e_step(&fit, &m);
        let mut loglik = 0.0;
        for i in 0..n {
            let pv = h.pvalues()[i];
            // Joint weights over (H, which of the pair is the truth).
            let candidates: Vec<f64> = if m.is_masked(i) { vec![pv, 1.0 - pv] } else { vec![pv] };
            let mut w1 = Vec::new();
            let mut w0 = 0.0;
            for &c in &candidates {
                w1.push(pi[i] * log_density(family, c, mu[i]).exp());
                w0 += 1.0 - pi[i];
            }
            let total: f64 = w1.iter().sum::<f64>() + w0;
            let h_hat = w1.iter().sum::<f64>() / total;
            let y_hat = w1.iter().zip(&candidates).map(|(w, &c)| w * suff_stat(family, c)).sum::<f64>()
                / w1.iter().sum::<f64>();
            loglik += total.ln();
            worst = worst.max((e.h_hat[i] - h_hat).abs());
            worst = worst.max((e.y_hat[i] - y_hat).abs() / y_hat.abs().max(1.0));
        }
        worst = worst.max((e.loglik - loglik).abs() / loglik.abs().max(1.0));
    }
    ensure(worst <= 1e-10, || format!("max error {worst:e}"))?;
    Ok(format!("1000 draws, max error {worst:.2e}"))
}

fn em_ascent() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut iterations = 0;
    let mut reverted = 0;
    for k in 0..20 {
        let n = rng.random_range(200..800);
        let family = if k % 2 == 0 { Family::Beta } else { Family::Gaussian };
        let slope = rng.random_range(0.0..0.8);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let p: Vec<f64> = x
            .iter()
            .map(|xi| {
                let alt = rng.random::<f64>() < 0.05 + slope * xi[0];
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                match (alt, family) {
                    (false, _) => rng.random(),
                    (true, Family::Beta) => rng.random::<f64>().powf(4.0),
                    (true, Family::Gaussian) => adapt_core::expfam::norm_cdf(-(z + 2.5)),
                }
            })
            .collect();
        let h = ingest(&p, &x).map_err(|e| e.to_string())?;
        let s = rng.random_range(0.1..0.5);
        let m = mask(&h, &ThresholdSurface::constant(n, s).map_err(|e| e.to_string())?);
        let d = FeaturePair::same(Featurization::NaturalSpline { knots: 3 })
            .designs(&h)
            .map_err(|e| e.to_string())?;
        let cfg = EmConfig {
            iterations: 30,
            tol: 0.0,
            mu_mode: MuFitMode::Weighted,
            ..EmConfig::default()
        };
        let fit = run_em(&m, &d, family, &cfg, None).map_err(|e| e.to_string())?;
        for w in fit.loglik_trace.windows(2) {
            ensure(w[1] >= w[0] - 1e-8, || format!("dataset {k}: {} -> {}", w[0], w[1]))?;
        }
        iterations += fit.iterations;
        reverted += usize::from(fit.reverted);
    }
    Ok(format!("20 datasets, {iterations} iterations, {reverted} stopped by the ascent guard"))
}

fn lemma2() -> Result<String, String> {
    let stops = [
        StopRule::SumAtMost(0),
        StopRule::SumAtMost(1),
        StopRule::EstimateBelow(0.5),
        StopRule::AfterSteps(2),
        StopRule::Exhaust,
    ];
    let mut checks = 0;
    let mut tightest: f64 = 0.0;
    for rho in [0.3, 0.5, 0.9] {
        for n in 1..=8 {
            for rule in ShrinkRule::MEASURABLE {
                for stop in stops {
                    let r = lemma2_check(n, rho, rule, stop).map_err(|e| e.to_string())?;
                    ensure(r.holds, || format!("{rule} {stop} n={n} rho={rho}: {} > {}", r.lhs, r.bound))?;
                    tightest = tightest.max(r.lhs / r.bound);
                    checks += 1;
                }
            }
        }
    }
    let peek = lemma2_check(3, 0.5, ShrinkRule::PeekHidden, StopRule::Exhaust);
    ensure(matches!(peek, Err(AdaptError::NonMeasurable(_))), || "peeking rule accepted".into())?;
    Ok(format!("{checks} exact checks hold, max lhs/bound {tightest:.4}; peeking rule rejected"))
}

fn mirror() -> Result<String, String> {
    let draws = 100_000;
    let mut lines = Vec::new();
    let mut run = |name: &str, sampler: Box<dyn FnMut(&mut ChaCha8Rng) -> f64>, seed, expect: bool| {
        let r = mirror_conservatism_score(sampler, 10, draws, seed).map_err(|e| e.to_string())?;
        ensure(r.passes(3.0) == expect, || format!("{name}: max z {:.2}", r.max_z))?;
        lines.push(format!("{name} z={:.2}", r.max_z));
        Ok::<(), String>(())
    };
    let err = |e: AdaptError| e.to_string();
    run("grid(20)", Box::new(grid_uniform_pvalue(20).map_err(err)?), 1, true)?;
    run("grid(7)", Box::new(grid_uniform_pvalue(7).map_err(err)?), 2, true)?;
    let g = FuzzyFamily::GaussianLocation;
    run("gauss θ=θ0", Box::new(fuzzy_mlr_pvalue(0.0, 0.0, g).map_err(err)?), 3, true)?;
    run("gauss θ<θ0", Box::new(fuzzy_mlr_pvalue(-0.5, 0.0, g).map_err(err)?), 4, true)?;
    let b = FuzzyFamily::Binomial { trials: 10 };
    run("binom θ=θ0", Box::new(fuzzy_mlr_pvalue(0.4, 0.4, b).map_err(err)?), 5, true)?;
    run("binom θ<θ0", Box::new(fuzzy_mlr_pvalue(0.25, 0.4, b).map_err(err)?), 6, true)?;
    run(
        "0.1+0.9·Bern(0.9)",
        Box::new(|r: &mut ChaCha8Rng| 0.1 + 0.9 * f64::from(u8::from(r.random::<f64>() < 0.9))),
        7,
        false,
    )?;
    Ok(lines.join(", "))
}

fn small_dataset(n: usize, seed: u64) -> HypothesisSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
    let p: Vec<f64> = x
        .iter()
        .map(|xi| {
            let u: f64 = rng.random();
            if rng.random::<f64>() < 0.05 + 0.6 * xi[0] { u.powf(5.0) } else { u }
        })
        .collect();
    ingest(&p, &x).expect("valid data")
}

fn small_config() -> AdaptConfig {
    AdaptConfig {
        candidates: vec![FeaturePair::same(Featurization::NaturalSpline { knots: 3 })],
        ..AdaptConfig::default()
    }
}

fn qvalue_consistency() -> Result<String, String> {
    let alphas: Vec<f64> = (1..=30).map(|k| 0.01 * k as f64).collect();
    let mut nonempty = 0;
    for seed in 0..20 {
        let h = small_dataset(200, 100 + seed);
        let full = run_adapt(&h, &small_config()).map_err(|e| e.to_string())?;
        for &alpha in &alphas {
            let cfg = AdaptConfig {
                alpha: Some(alpha),
                ..small_config()
            };
            let res = run_adapt(&h, &cfg).map_err(|e| e.to_string())?;
            let from_q = full.rejections_at(alpha).ok_or("no q-values")?;
            ensure(from_q == res.rejections, || {
                format!("seed {seed}, alpha {alpha}: {} vs {}", from_q.len(), res.rejections.len())
            })?;
            nonempty += usize::from(!from_q.is_empty());
        }
    }
    Ok(format!("20 datasets x 30 levels agree ({nonempty} non-empty sets)"))
}

fn masking_guard() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mutations = 0;
    let mut compared = 0;
    for d in 0..10 {
        let h = small_dataset(150, 500 + d);
        let horizon = 60;
        let mut engine = Engine::new(h.clone(), small_config()).map_err(|e| e.to_string())?;
        let mut snaps = vec![serde_json::to_string(&engine.snapshot()).map_err(|e| e.to_string())?];
        let mut masks = vec![engine.mask().clone()];
        for _ in 0..horizon {
            if !engine.step().map_err(|e| e.to_string())? {
                break;
            }
            snaps.push(serde_json::to_string(&engine.snapshot()).map_err(|e| e.to_string())?);
            masks.push(engine.mask().clone());
        }
        for _ in 0..20 {
            let t = rng.random_range(0..masks.len());
            let masked = masks[t].masked_indices();
            let lo: Vec<usize> = masked.iter().copied().filter(|&i| h.pvalues()[i] <= 0.5).collect();
            let hi: Vec<usize> = masked.iter().copied().filter(|&i| h.pvalues()[i] > 0.5).collect();
            // A flip moves a point between R and A; pairing one of each keeps
            // the visible counts.
            let flips = match (lo.is_empty(), hi.is_empty()) {
                (false, false) => vec![lo[rng.random_range(0..lo.len())], hi[rng.random_range(0..hi.len())]],
                _ => continue,
            };
            let mut other = Engine::new(h.flipped(&flips), small_config()).map_err(|e| e.to_string())?;
            for (k, snap) in snaps.iter().enumerate().take(t + 1) {
                if k > 0 {
                    other.step().map_err(|e| e.to_string())?;
                }
                let s = serde_json::to_string(&other.snapshot()).map_err(|e| e.to_string())?;
                ensure(&s == snap, || format!("dataset {d}, flips {flips:?}: snapshot {k} differs"))?;
                compared += 1;
            }
            let mut reference = Engine::new(h.clone(), small_config()).map_err(|e| e.to_string())?;
            reference.step_n(t).map_err(|e| e.to_string())?;
            let a = serde_json::to_string(reference.trace()).map_err(|e| e.to_string())?;
            let b = serde_json::to_string(other.trace()).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("dataset {d}, flips {flips:?}: trace differs at t={t}"))?;
            mutations += 1;
        }
    }
    ensure(mutations >= 150, || format!("only {mutations} usable mutations"))?;
    Ok(format!("{mutations} paired flips, {compared} snapshots byte-identical"))
}

fn info_loss() -> Result<String, String> {
    let cfg = example1_config();
    let corr = |region: Region, seed: u64| -> Result<f64, String> {
        let h = adapt_core::sim::generate_example1(region, 2.0, 700 + seed);
        let res = run_adapt(&h, &cfg).map_err(|e| e.to_string())?;
        let pts = info_loss_correlation(&h, &res, &cfg, &[0.2]).map_err(|e| e.to_string())?;
        pts[0].correlation.ok_or_else(|| format!("{region:?} seed {seed}: level never reached"))
    };
    let circle: Vec<f64> = (0..10).map(|s| corr(Region::Circle, s)).collect::<Result<_, _>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let min = circle.iter().copied().fold(f64::INFINITY, f64::min);
    // Shapes an additive basis cannot represent, reported only.
    let others: Vec<String> = [Region::Ellipse, Region::Ring]
        .into_iter()
        .map(|r| {
            let v: Vec<f64> = (0..3).map(|s| corr(r, s)).collect::<Result<_, _>>()?;
            Ok(format!("{r:?} {:.3}", mean(&v)))
        })
        .collect::<Result<_, String>>()?;
    let detail = format!(
        "circle mean {:.3} (min {min:.3}) over 10 runs; {}",
        mean(&circle),
        others.join(", ")
    );
    ensure(mean(&circle) >= 0.9, || detail.clone())?;
    Ok(detail)
}

fn example2() -> Result<String, String> {
    let oracle = AdaptConfig {
        candidates: vec![FeaturePair::same(Featurization::Subset { indices: vec![0, 1] })],
        ..AdaptConfig::default()
    };
    let mut lasso = AdaptConfig {
        candidates: vec![FeaturePair::same(Featurization::Identity)],
        ..AdaptConfig::default()
    };
    lasso.em.penalty = Penalty::l1();
    let methods = [
        Method::Adapt {
            label: "oracle".into(),
            config: Box::new(oracle),
        },
        Method::Adapt {
            label: "lasso".into(),
            config: Box::new(lasso),
        },
        Method::Bh,
    ];
    let scenario = Scenario::Example2 { n: 3000, d: 100 };
    let report = run_replicates(&scenario, &methods, &[0.1], 50, 77).map_err(|e| e.to_string())?;
    let get = |m: &str| report.summary_for(m, 0.1).ok_or("missing summary");
    let (o, l, b) = (get("oracle")?, get("lasso")?, get("bh")?);
    let (po, pl, pb) = (o.mean_power.unwrap_or(0.0), l.mean_power.unwrap_or(0.0), b.mean_power.unwrap_or(0.0));
    let detail = format!(
        "power oracle {po:.4} lasso {pl:.4} bh {pb:.4}; FDP oracle {:.4}±{:.4} lasso {:.4}±{:.4}",
        o.mean_fdp, o.se_fdp, l.mean_fdp, l.se_fdp
    );
    ensure(po >= pl && pl >= pb, || detail.clone())?;
    for s in [o, l] {
        ensure(s.mean_fdp <= 0.1 + 2.0 * s.se_fdp, || detail.clone())?;
    }
    Ok(detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 11] = [
        ("FDR control, example 1", fdr_control),
        ("power over BH and Storey-BH", power_ordering),
        ("Barber-Candes equivalence", bc_equivalence),
        ("E-step enumeration oracle", e_step_oracle),
        ("EM ascent", em_ascent),
        ("optional-stopping bound", lemma2),
        ("mirror-conservatism", mirror),
        ("q-value consistency", qvalue_consistency),
        ("masking guard", masking_guard),
        ("information loss", info_loss),
        ("example 2 ordering", example2),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
