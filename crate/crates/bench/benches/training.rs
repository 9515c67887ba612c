use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msarobust_bench::{dataset, model, one_epoch};
use msarobust_core::{train_robust, train_standard, Modality, RobustSpec, Split, Tensor};

fn forward_backward(c: &mut Criterion) {
    let ds = dataset(256, 64);
    let batch: Vec<_> = ds.split(Split::Train).into_iter().take(32).collect();
    let labels = Tensor::new(batch.len(), 1, batch.iter().map(|r| r.label).collect()).unwrap();
    let mut group = c.benchmark_group("forward_backward");
    for hidden in [16, 64] {
        let m = model(&ds, hidden);
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &m, |b, m| {
            b.iter(|| {
                let mut fwd = m.forward(black_box(&batch), &[]).unwrap();
                let y = fwd.tape.constant(labels.clone());
                let loss = fwd.tape.mse(fwd.predictions, y).unwrap();
                fwd.tape.backward(loss).unwrap();
                black_box(fwd.tape.grad(fwd.params[0]))
            })
        });
    }
    group.finish();
}

fn train_epoch(c: &mut Criterion) {
    let ds = dataset(2000, 200);
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    group.bench_function("standard", |b| {
        b.iter(|| train_standard(model(&ds, 16), &ds, &one_epoch(1)).unwrap())
    });
    group.bench_function("robust_balanced_30", |b| {
        let mut cfg = one_epoch(1);
        cfg.robust = Some(RobustSpec::balanced(0.3, Modality::Language));
        b.iter(|| train_robust(model(&ds, 16), &ds, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, forward_backward, train_epoch);
criterion_main!(benches);
