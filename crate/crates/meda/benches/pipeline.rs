//! Benchmarks for the data-parallel hot paths, comparing the rayon pool
//! against a single-thread pool in one run. Build with
//! `--no-default-features` to measure the fully sequential fallback
//! instead.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use meda::alignment;
use meda::data::SyntheticTaskSpec;
use meda::graph;
use meda::learner::{self, FitOptions, HyperParams, KernelSpec};
use nalgebra::DMatrix;

struct Fixture {
    pair: meda::DatasetPair,
    stacked: DMatrix<f64>,
    kernel: KernelSpec,
    truth: Vec<i64>,
}

fn fixture(n_per_class: usize) -> Fixture {
    let pair = SyntheticTaskSpec::moderate_shift(77);
    let pair = SyntheticTaskSpec {
        n_per_class,
        ..pair
    }
    .generate()
    .unwrap();
    let stacked = pair.source.stack_data(&pair.target).unwrap();
    let kernel = KernelSpec::rbf_auto().resolve(&stacked).unwrap();
    let truth = pair.target.labels().unwrap().to_vec();
    Fixture {
        pair,
        stacked,
        kernel,
        truth,
    }
}

/// Execution contexts to compare. With the `parallel` feature each closure
/// runs once in the default pool and once pinned to a single thread; the
/// sequential build has exactly one context.
fn contexts() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    if cfg!(feature = "parallel") {
        vec![
            ("parallel", None),
            (
                "single-thread",
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(1)
                        .build()
                        .unwrap(),
                ),
            ),
        ]
    } else {
        vec![("sequential", None)]
    }
}

fn in_context<T>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match pool {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

fn bench_kernel_matrix(c: &mut Criterion) {
    let fx = fixture(200); // 1200 samples total
    let mut group = c.benchmark_group("kernel_matrix_1200x10");
    for (label, pool) in contexts() {
        group.bench_function(label, |b| {
            b.iter(|| in_context(&pool, || learner::kernel_matrix(black_box(&fx.stacked), &fx.kernel).unwrap()))
        });
    }
    group.finish();
}

fn bench_affinity(c: &mut Criterion) {
    let fx = fixture(200);
    let mut group = c.benchmark_group("affinity_1200x10_p10");
    for (label, pool) in contexts() {
        group.bench_function(label, |b| {
            b.iter(|| in_context(&pool, || graph::build_affinity(black_box(&fx.stacked), 10).unwrap()))
        });
    }
    group.finish();
}

fn bench_estimate_mu(c: &mut Criterion) {
    let fx = fixture(200);
    let mut group = c.benchmark_group("estimate_mu_600v600");
    for (label, pool) in contexts() {
        group.bench_function(label, |b| {
            b.iter(|| {
                in_context(&pool, || {
                    alignment::estimate_mu(
                        black_box(&fx.pair.source),
                        black_box(&fx.pair.target),
                        &fx.truth,
                        7,
                    )
                    .unwrap()
                })
            })
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let fx = fixture(100);
    let hyper = HyperParams {
        d: 3,
        t_max: 5,
        ..HyperParams::default()
    };
    let mut group = c.benchmark_group("adapt_600_samples");
    group.sample_size(10);
    for (label, pool) in contexts() {
        group.bench_function(label, |b| {
            b.iter(|| {
                in_context(&pool, || {
                    learner::adapt(black_box(&fx.pair), &hyper, &FitOptions::default()).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_kernel_matrix,
    bench_affinity,
    bench_estimate_mu,
    bench_fit
);
criterion_main!(benches);
