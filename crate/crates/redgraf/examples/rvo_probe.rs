//! RVO-only probe.
use std::path::Path;
use std::time::Instant;
use redgraf::config::ExperimentConfig;
use redgraf::engine::AlgorithmKind;
use redgraf::harness::{execute, ExecuteOptions};

fn main() {
    let mut cfg = ExperimentConfig::reference();
    cfg.experiment.algorithms = vec![AlgorithmKind::Rvo];
    cfg.experiment.runs = 1;
    cfg.experiment.rounds = 100;
    cfg.experiment.step_sizes = vec![0.02];
    let resolved = cfg.resolve(Path::new(".")).unwrap();
    let degs: Vec<usize> = (0..resolved.graph.n()).map(|i| resolved.graph.in_neighbors(i).len()).collect();
    println!("in-degrees min {} max {}", degs.iter().min().unwrap(), degs.iter().max().unwrap());
    let t0 = Instant::now();
    let results = execute(&resolved, &ExecuteOptions::default()).unwrap();
    let dt = t0.elapsed();
    let cell = &results.cells[0];
    let r = &cell.summary.runs[0];
    println!("1 run x 100 rounds in {:.2?} -> per-round {:.2?}", dt, dt / 100);
    println!("max_gamma {:?} resid {:?} plateau {:.4} final_dist {:.5}", r.max_gamma_eff, r.max_contraction_residual, r.plateau_diameter, r.final_dist_to_xstar);
}
