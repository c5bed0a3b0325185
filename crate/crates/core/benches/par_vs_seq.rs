//! Benchmarks the randomized inequality suite under sequential vs sharded
//! parallel execution. Build without the `parallel` feature to see the
//! sequential fallback timing for the "parallel" mode as well.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use degenflow_core::inequality::{run_lemma_suite, SuiteConfig};
use degenflow_core::ExecMode;

fn suite_config(samples: usize) -> SuiteConfig {
    SuiteConfig {
        p_values: vec![2.0, 3.0, 6.0],
        delta_values: vec![0.5],
        n_values: vec![2, 3],
        samples,
        seed: 42,
        tolerance: 1e-12,
        calibration_samples: samples / 4,
    }
}

fn bench_lemma_suite(c: &mut Criterion) {
    let mut group = c.benchmark_group("lemma_suite");
    group.sample_size(10);
    for samples in [10_000, 40_000] {
        let cfg = suite_config(samples);
        group.bench_with_input(
            BenchmarkId::new("sequential", samples),
            &cfg,
            |b, cfg| b.iter(|| run_lemma_suite(cfg, ExecMode::Sequential).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("parallel", samples),
            &cfg,
            |b, cfg| b.iter(|| run_lemma_suite(cfg, ExecMode::Parallel).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_lemma_suite);
criterion_main!(benches);
