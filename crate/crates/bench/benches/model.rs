use std::hint::black_box;

use co2bayes_bench::injection_params;
use co2bayes_core::{simulate_ode, simulate_sde, Ensemble};
use criterion::{criterion_group, criterion_main, Criterion};

fn paths(c: &mut Criterion) {
    let (p, v) = injection_params();
    c.bench_function("ode 3h dt=1s", |b| b.iter(|| simulate_ode(420.0, black_box(&p), v, 3.0, 1.0 / 3600.0).unwrap()));
    c.bench_function("sde 3h dt=1s", |b| {
        b.iter(|| simulate_sde(420.0, black_box(&p), v, 3.0, 1.0 / 3600.0, 7).unwrap())
    });
    let mut g = c.benchmark_group("ensemble");
    g.sample_size(10);
    g.bench_function("100 runs 3h dt=1s", |b| {
        b.iter(|| Ensemble::simulate(420.0, black_box(&p), v, 3.0, 1.0 / 3600.0, 100, 7).unwrap())
    });
    g.finish();
}

criterion_group!(benches, paths);
criterion_main!(benches);
