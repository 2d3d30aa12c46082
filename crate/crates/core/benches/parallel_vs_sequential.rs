use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use tnprob::data::Dataset;
use tnprob::par;
use tnprob::ranks::{prime_matrix, real_sqrt_rank, DEFAULT_MAX_ENTRIES};
use tnprob::training::{fit_dense, nll_gradient, ModelKind, Optimizer, TrainConfig};

fn modes(c: &mut Criterion, name: &str, mut f: impl FnMut()) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    for (label, sequential) in [("parallel", false), ("sequential", true)] {
        group.bench_function(label, |b| {
            par::set_sequential(sequential);
            b.iter(&mut f);
        });
    }
    par::set_sequential(false);
    group.finish();
}

fn benches(c: &mut Criterion) {
    let prime = prime_matrix(4).unwrap();
    modes(c, "real_sqrt_rank_prime4", || {
        black_box(real_sqrt_rank(&prime, DEFAULT_MAX_ENTRIES).unwrap());
    });

    let model = ModelKind::LpsComplex.random_model(10, 2, 4, 2, 0);
    let data = Dataset::new(10, 2, model.sample_many(500, 1).unwrap()).unwrap();
    modes(c, "nll_gradient_lps", || {
        black_box(nll_gradient(&model, data.rows()).unwrap());
    });

    let p = model.to_dense().unwrap().reshape(&[32, 32]).unwrap();
    let z = p.sum();
    let p = p.scale(tnprob::C64::new(1.0 / z.re, 0.0));
    let config = TrainConfig { optimizer: Optimizer::Lbfgs, restarts: 4, max_iters: 100, ..TrainConfig::default() };
    modes(c, "fit_dense_restarts", || {
        black_box(fit_dense(&p, ModelKind::BornComplex, 3, 1, &config).unwrap());
    });
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
