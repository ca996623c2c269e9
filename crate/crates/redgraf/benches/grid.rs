//! Run-grid throughput: rayon-parallel execution vs the sequential
//! fallback on a moderate grid.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use std::path::Path;

use redgraf::config::ExperimentConfig;
use redgraf::engine::AlgorithmKind;
use redgraf::harness::{execute, execute_sequential, ExecuteOptions};

fn bench_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_config();
    cfg.experiment.agents = 12;
    cfg.experiment.rounds = 60;
    cfg.experiment.runs = 8;
    cfg.experiment.algorithms = vec![AlgorithmKind::Cwtm, AlgorithmKind::Sdmmfd];
    cfg.experiment.step_sizes = vec![0.02];
    cfg.experiment.allow_any_step = true;
    cfg.graph.robustness = 6;
    cfg.adversary.byzantine = vec![4];
    cfg
}

fn grid_benchmarks(c: &mut Criterion) {
    let resolved = bench_config().resolve(Path::new(".")).unwrap();
    let options = ExecuteOptions::default();

    let mut group = c.benchmark_group("run_grid");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(execute(&resolved, &options).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(execute_sequential(&resolved, &options).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, grid_benchmarks);
criterion_main!(benches);
