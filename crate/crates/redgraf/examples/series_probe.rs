//! Auxiliary-channel decay probe.
use std::path::Path;
use redgraf::config::ExperimentConfig;
use redgraf::engine::AlgorithmKind;
use redgraf::harness::{execute, ExecuteOptions};

fn main() {
    let mut cfg = ExperimentConfig::reference();
    cfg.experiment.runs = 3;
    cfg.experiment.rounds = 200;
    cfg.experiment.algorithms = vec![AlgorithmKind::Sdmmfd, AlgorithmKind::Sdfd];
    cfg.experiment.step_sizes = vec![0.02];
    let resolved = cfg.resolve(Path::new(".")).unwrap();
    let results = execute(&resolved, &ExecuteOptions { record_states: false, audit: false }).unwrap();
    for cell in &results.cells {
        for trace in &cell.runs {
            let series: Vec<f64> = trace.rounds.iter().map(|r| r.max_y_dev.unwrap()).collect();
            let mut violations = 0usize;
            let mut worst: f64 = 0.0;
            for w in series.windows(2).skip(1) {
                if w[1] > w[0] + 1e-12 {
                    violations += 1;
                    worst = worst.max(w[1] - w[0]);
                }
            }
            let below = series.iter().position(|v| *v < 1e-6);
            println!(
                "{} run{}: y_dev[0] {:.4} violations {} worst +{:.3e} below 1e-6 at {:?} final {:.3e}",
                cell.kind, trace.run_index, series[0], violations, worst, below, series.last().unwrap()
            );
        }
    }
}
