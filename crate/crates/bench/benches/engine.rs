use adapt_bench::{grid_data, spline_config, uniform_data};
use adapt_core::baselines::{barber_candes, bh};
use adapt_core::em::run_em;
use adapt_core::sim::{lemma2_check, ShrinkRule, StopRule};
use adapt_core::{mask, Engine, Family, ThresholdSurface};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn masking(c: &mut Criterion) {
    let mut g = c.benchmark_group("mask");
    for n in [10_000, 1_000_000] {
        let h = uniform_data(n);
        let s = ThresholdSurface::constant(n, 0.45).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &h, |b, h| b.iter(|| mask(black_box(h), &s)));
    }
    g.finish();
}

fn baselines(c: &mut Criterion) {
    let h = uniform_data(100_000);
    c.bench_function("bh/100000", |b| b.iter(|| bh(black_box(h.pvalues()), 0.1).unwrap()));
    c.bench_function("bc/100000", |b| b.iter(|| barber_candes(black_box(h.pvalues()), 0.1).unwrap()));
}

fn em(c: &mut Criterion) {
    let h = grid_data(1);
    let m = mask(&h, &ThresholdSurface::constant(h.len(), 0.45).unwrap());
    let cfg = spline_config(6);
    let designs = cfg.candidates[0].designs(&h).unwrap();
    c.bench_function("em/grid2500/spline6", |b| {
        b.iter(|| run_em(black_box(&m), &designs, Family::Beta, &cfg.em, None).unwrap())
    });
}

fn engine(c: &mut Criterion) {
    let h = grid_data(2);
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    g.bench_function("new/grid2500", |b| b.iter(|| Engine::new(h.clone(), spline_config(6)).unwrap()));
    let base = Engine::new(h.clone(), spline_config(6)).unwrap();
    g.bench_function("step/grid2500", |b| {
        b.iter_batched(
            || Engine::new(h.clone(), spline_config(6)).unwrap(),
            |mut e| e.step().unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
    g.bench_function("snapshot/grid2500", |b| b.iter(|| base.snapshot()));
    g.finish();
}

fn lemma2(c: &mut Criterion) {
    c.bench_function("lemma2/n10", |b| {
        b.iter(|| lemma2_check(10, 0.5, ShrinkRule::DropMaxWhilePositive, StopRule::Exhaust).unwrap())
    });
}

criterion_group!(benches, masking, baselines, em, engine, lemma2);
criterion_main!(benches);
