//! Scratch probe of the reference experiment's empirical behavior.

use std::path::Path;
use std::time::Instant;

use redgraf::config::ExperimentConfig;
use redgraf::engine::AlgorithmKind;
use redgraf::harness::{execute, ExecuteOptions};

fn main() {
    let mut cfg = ExperimentConfig::reference();
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--no-rvo") {
        cfg.experiment.algorithms = vec![
            AlgorithmKind::Sdmmfd,
            AlgorithmKind::Sdfd,
            AlgorithmKind::Cwtm,
        ];
    }
    if let Some(pos) = args.iter().position(|a| a == "--runs") {
        cfg.experiment.runs = args[pos + 1].parse().unwrap();
    }
    if let Some(pos) = args.iter().position(|a| a == "--rounds") {
        cfg.experiment.rounds = args[pos + 1].parse().unwrap();
    }

    let resolved = cfg.resolve(Path::new(".")).unwrap();
    println!(
        "mu_tilde {:.4} l_tilde {:.4} kappa {:.4} r* {:.4} x* {:?}",
        resolved.ensemble.mu_tilde(),
        resolved.ensemble.l_tilde(),
        resolved.ensemble.kappa(),
        resolved.geometry.r_star,
        resolved.geometry.x_star.as_slice()
    );
    for sv in &resolved.step_validity {
        println!("validity {} a={} -> {:?}", sv.kind, sv.alpha, sv.reduction);
    }

    let t0 = Instant::now();
    let results = execute(&resolved, &ExecuteOptions { record_states: false, audit: false }).unwrap();
    println!("grid executed in {:.1?}", t0.elapsed());

    for cell in &results.cells {
        let s = &cell.summary;
        println!(
            "== {} a={} reduction {:?} mean_rate {:?} plateau_diam {:.4} (std {:.4})",
            s.algorithm, s.alpha, s.reduction, s.mean_fitted_rate, s.mean_plateau_diameter, s.plateau_std
        );
        if let Some(wc) = &s.worst_case {
            println!(
                "   worst-case beta {:.4} gamma {} rate {:?} r_c_bound {:.3} R* {:?}",
                wc.beta, wc.gamma, wc.rate, wc.r_c_bound, wc.r_star
            );
        }
        for r in &s.runs {
            println!(
                "   run{} seed {} rate {:?} max_gamma {:?} resid {:?} r_c {:.3} empR* {:?} plateau {:.4} final_dist {:.5} final_center {:.4}",
                r.run_index,
                r.run_seed,
                r.fitted_rate.map(|v| (v * 1e4).round() / 1e4),
                r.max_gamma_eff.map(|v| (v * 1e4).round() / 1e4),
                r.max_contraction_residual.map(|v| (v * 1e6).round() / 1e6),
                r.measured_r_c,
                r.empirical_r_star.map(|v| (v * 1e3).round() / 1e3),
                r.plateau_diameter,
                r.final_dist_to_xstar,
                r.final_max_dist_to_center,
            );
        }
    }
}
