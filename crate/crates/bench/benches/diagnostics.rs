use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use msarobust_bench::{dataset, model};
use msarobust_core::diagnostics::sweep_runs;
use msarobust_core::{
    run_diagnostic, sweep, DiagnosticConfig, HookPoint, Modality, PerturbationPlan, PlanKind,
};

fn single_diagnostic(c: &mut Criterion) {
    let ds = dataset(32, 1000);
    let m = model(&ds, 16);
    let plan = PerturbationPlan::new(Modality::Language, PlanKind::Noise, 0.3, HookPoint::PostEncoder, 1)
        .unwrap();
    c.bench_function("run_diagnostic/noise_30", |b| {
        b.iter(|| run_diagnostic(&m, &ds, black_box(&plan)).unwrap())
    });
}

fn full_sweep(c: &mut Criterion) {
    let ds = dataset(32, 1000);
    let cfg = DiagnosticConfig::default();
    let runs: Vec<_> = cfg.seeds.iter().map(|&s| (s, model(&ds, 16))).collect();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_function("one_seed", |b| b.iter(|| sweep(&runs[0].1, &ds, &cfg, 1).unwrap()));
    group.bench_function("three_seeds_parallel", |b| b.iter(|| sweep_runs(&runs, &ds, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, single_diagnostic, full_sweep);
criterion_main!(benches);
