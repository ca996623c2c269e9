//! Run-grid execution: every configured `(algorithm, step size, run)` cell
//! as an independent deterministic run, executed in parallel when the
//! `parallel` feature is enabled (the default) and joined in grid order so
//! output artifacts are byte-stable either way.
//!
//! `REDGRAF_THREADS` bounds the worker pool.

use serde::Serialize;

use crate::config::ResolvedExperiment;
use crate::engine::{self, AlgorithmKind, RunParams};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, fit_geometric_rate, transient_window, write_aggregate_csv, write_run_csv, RunTrace,
};
use crate::seed::{self, purpose};
use crate::theory::{self, ReductionType};

/// Artifacts of one `(algorithm, alpha)` grid cell.
pub struct CellResults {
    pub kind: AlgorithmKind,
    pub alpha: f64,
    pub runs: Vec<RunTrace>,
    pub run_csvs: Vec<String>,
    pub aggregate_csv: String,
    pub summary: CellSummary,
}

/// Per-cell summary entry of the run-grid summary document.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub algorithm: String,
    pub alpha: f64,
    pub reduction: ReductionType,
    pub runs: Vec<RunSummary>,
    /// Mean of the per-run fitted geometric rates (when fit succeeded).
    pub mean_fitted_rate: Option<f64>,
    /// Mean over runs of the plateau diameter (median of the last 10%).
    pub mean_plateau_diameter: f64,
    /// Std of the last-10% diameter values of the run-averaged series over
    /// the plateau window.
    pub plateau_std: f64,
    /// Worst-case bound bundle at the algorithm's guaranteed contraction
    /// factor, with `r_c` from the enclosing-ball lemma bound.
    pub worst_case: Option<WorstCaseBounds>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstCaseBounds {
    pub beta: f64,
    pub gamma: f64,
    pub rate: Option<f64>,
    pub r_c_bound: f64,
    pub r_star: Option<f64>,
    pub gradient_bound: Option<f64>,
    pub d_star_normalized: Option<f64>,
    pub d_star: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub run_seed: u64,
    /// Median-of-ratios geometric factor of the transient; when the series
    /// reaches its plateau within one round the factor of that single step
    /// is reported (clamped at zero).
    pub fitted_rate: Option<f64>,
    pub max_gamma_eff: Option<f64>,
    pub max_contraction_residual: Option<f64>,
    pub measured_r_c: f64,
    /// Convergence radius computed from the measured `r_c` and the per-run
    /// max effective contraction factor (when that keeps `beta sqrt(g) < 1`).
    pub empirical_r_star: Option<f64>,
    pub plateau_diameter: f64,
    pub final_dist_to_xstar: f64,
    pub final_max_dist_to_center: f64,
    /// Log-linear auxiliary decay fit `max_y_dev ~ c1 * xi^k`, when the
    /// algorithm carries the auxiliary channel.
    pub aux_decay: Option<AuxDecayFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuxDecayFit {
    pub c1: f64,
    pub c2: f64,
    pub xi: f64,
}

/// Whole-grid summary document (serialized as `summary.json`).
#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub config_fingerprint: String,
    pub mu_tilde: f64,
    pub l_tilde: f64,
    pub kappa: f64,
    pub x_star: Vec<f64>,
    pub c_star: Vec<f64>,
    pub r_star_ball: f64,
    pub min_local_dist: f64,
    pub min_local_gap: f64,
    pub cells: Vec<CellSummary>,
}

/// Results of the whole grid, cells in configured order.
pub struct GridResults {
    pub cells: Vec<CellResults>,
    pub summary: GridSummary,
}

impl GridResults {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

fn grid_jobs(resolved: &ResolvedExperiment) -> Vec<(AlgorithmKind, f64, usize)> {
    let exp = &resolved.config.experiment;
    let mut jobs = Vec::new();
    for &kind in &exp.algorithms {
        for &alpha in &exp.step_sizes {
            for run in 0..exp.runs {
                jobs.push((kind, alpha, run));
            }
        }
    }
    jobs
}

fn run_one(
    resolved: &ResolvedExperiment,
    kind: AlgorithmKind,
    alpha: f64,
    run_index: usize,
    record_states: bool,
    audit: bool,
) -> Result<RunTrace> {
    let exp = &resolved.config.experiment;
    // The purpose path deliberately excludes the algorithm and alpha: every
    // cell sees the same initial states and adversary streams, matching a
    // protocol that varies only the aggregation rule across cells.
    let run_seed = seed::mix(exp.master_seed, &[purpose::RUN, run_index as u64]);
    engine::run(&RunParams {
        kind,
        alpha,
        rounds: exp.rounds,
        run_seed,
        run_index,
        graph: &resolved.graph,
        claimed_robustness: resolved.claimed_robustness,
        ensemble: &resolved.ensemble,
        geometry: &resolved.geometry,
        placement: &resolved.placement,
        strategy: &resolved.strategy,
        init_box: &resolved.init_box,
        safe_limits: resolved.safe_limits,
        record_states,
        audit,
    })
}

/// Executes every run of the grid sequentially.
pub fn execute_sequential(resolved: &ResolvedExperiment, options: &ExecuteOptions) -> Result<GridResults> {
    let jobs = grid_jobs(resolved);
    let traces: Result<Vec<RunTrace>> = jobs
        .iter()
        .map(|&(kind, alpha, run)| {
            run_one(resolved, kind, alpha, run, options.record_states, options.audit)
        })
        .collect();
    assemble(resolved, jobs, traces?)
}

/// Executes the grid on a rayon pool (bounded by `REDGRAF_THREADS` when
/// set), joining results in grid order.
#[cfg(feature = "parallel")]
pub fn execute(resolved: &ResolvedExperiment, options: &ExecuteOptions) -> Result<GridResults> {
    use rayon::prelude::*;

    let jobs = grid_jobs(resolved);
    let pool = thread_pool()?;
    let traces: Result<Vec<RunTrace>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(kind, alpha, run)| {
                run_one(resolved, kind, alpha, run, options.record_states, options.audit)
            })
            .collect()
    });
    assemble(resolved, jobs, traces?)
}

/// Sequential fallback when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn execute(resolved: &ResolvedExperiment, options: &ExecuteOptions) -> Result<GridResults> {
    execute_sequential(resolved, options)
}

#[cfg(feature = "parallel")]
fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("REDGRAF_THREADS") {
        let threads: usize = value
            .parse()
            .map_err(|_| Error::config(format!("invalid REDGRAF_THREADS value '{value}'")))?;
        builder = builder.num_threads(threads.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExecuteOptions {
    pub record_states: bool,
    pub audit: bool,
}

/// `(median, mean, std)` of the last 10% of the series.
fn plateau_stats(series: &[f64]) -> (f64, f64, f64) {
    let tail_len = (series.len() / 10).max(1);
    let tail = &series[series.len() - tail_len..];
    let mut sorted = tail.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let std = if tail.len() < 2 {
        0.0
    } else {
        (tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tail.len() - 1) as f64).sqrt()
    };
    (median, mean, std)
}

/// Least-squares fit of `log(series) ~ log(c1) - c2 k` over positive values.
fn fit_aux_decay(series: &[f64]) -> Option<AuxDecayFit> {
    let points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 1e-300)
        .map(|(k, v)| (k as f64, v.ln()))
        .collect();
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|(x, _)| x).sum();
    let sy: f64 = points.iter().map(|(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let c2 = -slope;
    Some(AuxDecayFit {
        c1: intercept.exp(),
        c2,
        xi: (-c2).exp(),
    })
}

/// Decay factor of the first round for series that hit their plateau
/// within one step, clamped at zero.
fn one_step_rate(series: &[f64]) -> Option<f64> {
    if series.len() < 2 {
        return None;
    }
    let tail_len = (series.len() / 10).max(1);
    let tail = &series[series.len() - tail_len..];
    let mut sorted = tail.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let plateau = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let h0 = series[0] - plateau;
    if h0 <= 0.0 {
        return None;
    }
    Some(((series[1] - plateau) / h0).max(0.0))
}

fn summarize_run(resolved: &ResolvedExperiment, trace: &RunTrace) -> RunSummary {
    let center_series = trace.center_distance_series();
    let fitted_rate = transient_window(&center_series, 5, 50)
        .and_then(|window| fit_geometric_rate(&center_series, window).ok())
        .or_else(|| one_step_rate(&center_series));
    let (plateau_diameter, _, _) = plateau_stats(&trace.diameter_series());
    let max_gamma_eff = trace.max_gamma_eff();

    let empirical_r_star = max_gamma_eff.and_then(|g| {
        theory::convergence_radius(
            trace.measured_r_c,
            g,
            trace.alpha,
            resolved.ensemble.mu_tilde(),
            resolved.ensemble.l_tilde(),
        )
        .ok()
    });

    let aux_decay = trace
        .rounds
        .iter()
        .map(|r| r.max_y_dev)
        .collect::<Option<Vec<f64>>>()
        .and_then(|series| fit_aux_decay(&series));

    let last = trace.rounds.last().expect("non-empty trace");
    RunSummary {
        run_index: trace.run_index,
        run_seed: trace.run_seed,
        fitted_rate,
        max_gamma_eff,
        max_contraction_residual: trace.max_contraction_residual(),
        measured_r_c: trace.measured_r_c,
        empirical_r_star,
        plateau_diameter,
        final_dist_to_xstar: last.dist_to_xstar,
        final_max_dist_to_center: last.max_dist_to_center,
        aux_decay,
    }
}

fn assemble(
    resolved: &ResolvedExperiment,
    jobs: Vec<(AlgorithmKind, f64, usize)>,
    traces: Vec<RunTrace>,
) -> Result<GridResults> {
    let exp = &resolved.config.experiment;
    let runs = exp.runs;
    let mut cells = Vec::new();
    let mut remaining: std::collections::VecDeque<RunTrace> = traces.into();
    let mut job_iter = jobs.into_iter();

    for &kind in &exp.algorithms {
        for &alpha in &exp.step_sizes {
            let mut cell_traces = Vec::with_capacity(runs);
            for _ in 0..runs {
                let (jk, ja, _) = job_iter.next().expect("job order");
                debug_assert!(jk == kind && ja == alpha);
                cell_traces.push(remaining.pop_front().expect("trace order"));
            }
            let run_csvs: Vec<String> = cell_traces.iter().map(write_run_csv).collect();
            let refs: Vec<&RunTrace> = cell_traces.iter().collect();
            let aggregate_csv = write_aggregate_csv(&aggregate(&refs)?);

            let run_summaries: Vec<RunSummary> = cell_traces
                .iter()
                .map(|t| summarize_run(resolved, t))
                .collect();
            let fitted: Vec<f64> = run_summaries.iter().filter_map(|r| r.fitted_rate).collect();
            let mean_fitted_rate = (!fitted.is_empty())
                .then(|| fitted.iter().sum::<f64>() / fitted.len() as f64);

            // Plateau of the run-averaged diameter series.
            let rounds = cell_traces[0].rounds.len();
            let mean_diameter: Vec<f64> = (0..rounds)
                .map(|k| {
                    cell_traces.iter().map(|t| t.rounds[k].diameter).sum::<f64>()
                        / cell_traces.len() as f64
                })
                .collect();
            let (_, mean_plateau_diameter, plateau_std) = plateau_stats(&mean_diameter);

            let d = resolved.ensemble.dim();
            let f = resolved.placement.f;
            let worst_case = {
                let y_inf = cell_traces.iter().find_map(|t| t.y_inf.clone());
                let r_c_bound = theory::r_c_bound(
                    kind,
                    resolved.geometry.r_star,
                    resolved.geometry.epsilon_star,
                    d,
                );
                theory::bounds_for(
                    kind,
                    d,
                    f,
                    alpha,
                    resolved.ensemble.mu_tilde(),
                    resolved.ensemble.l_tilde(),
                    r_c_bound,
                    &resolved.geometry,
                    y_inf.as_ref(),
                    resolved.rho_lambda,
                )
                .ok()
                .map(|b| WorstCaseBounds {
                    beta: b.beta,
                    gamma: b.gamma,
                    rate: b.rate,
                    r_c_bound,
                    r_star: b.r_star,
                    gradient_bound: b.gradient_bound,
                    d_star_normalized: b.d_star_normalized,
                    d_star: b.d_star,
                })
            };

            let summary = CellSummary {
                algorithm: kind.name().to_string(),
                alpha,
                reduction: resolved.reduction_for(kind, alpha),
                runs: run_summaries,
                mean_fitted_rate,
                mean_plateau_diameter,
                plateau_std,
                worst_case,
            };
            cells.push(CellResults {
                kind,
                alpha,
                runs: cell_traces,
                run_csvs,
                aggregate_csv,
                summary,
            });
        }
    }

    let min_local_dist = cells
        .first()
        .and_then(|c| c.runs.first())
        .map(|t| t.min_local_dist)
        .unwrap_or(f64::NAN);
    let min_local_gap = cells
        .first()
        .and_then(|c| c.runs.first())
        .map(|t| t.min_local_gap)
        .unwrap_or(f64::NAN);

    let summary = GridSummary {
        config_fingerprint: format!("{:016x}", resolved.config.fingerprint()),
        mu_tilde: resolved.ensemble.mu_tilde(),
        l_tilde: resolved.ensemble.l_tilde(),
        kappa: resolved.ensemble.kappa(),
        x_star: resolved.geometry.x_star.iter().copied().collect(),
        c_star: resolved.geometry.c_star.iter().copied().collect(),
        r_star_ball: resolved.geometry.r_star,
        min_local_dist,
        min_local_gap,
        cells: cells.iter().map(|c| c.summary.clone()).collect(),
    };

    Ok(GridResults { cells, summary })
}

/// File name of one run's CSV inside the output directory.
pub fn run_csv_name(kind: AlgorithmKind, alpha: f64, run_index: usize) -> String {
    format!("runs/{}_a{}_s{}.csv", kind.name(), alpha, run_index)
}

/// File name of one cell's aggregate CSV.
pub fn aggregate_csv_name(kind: AlgorithmKind, alpha: f64) -> String {
    format!("aggregate_{}_a{}.csv", kind.name(), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use std::path::Path;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_config();
        cfg.experiment.agents = 9;
        cfg.experiment.rounds = 30;
        cfg.experiment.runs = 2;
        cfg.experiment.algorithms = vec![AlgorithmKind::Cwtm, AlgorithmKind::Sdfd];
        cfg.experiment.allow_any_step = true;
        cfg.graph.robustness = 4;
        cfg.adversary.byzantine = vec![2];
        cfg
    }

    #[test]
    fn parallel_and_sequential_agree_bytewise() {
        let resolved = tiny_config().resolve(Path::new(".")).unwrap();
        let options = ExecuteOptions::default();
        let a = execute(&resolved, &options).unwrap();
        let b = execute_sequential(&resolved, &options).unwrap();
        assert_eq!(a.cells.len(), b.cells.len());
        for (ca, cb) in a.cells.iter().zip(b.cells.iter()) {
            assert_eq!(ca.run_csvs, cb.run_csvs);
            assert_eq!(ca.aggregate_csv, cb.aggregate_csv);
        }
        assert_eq!(a.summary_json(), b.summary_json());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let resolved = tiny_config().resolve(Path::new(".")).unwrap();
        let options = ExecuteOptions::default();
        let a = execute(&resolved, &options).unwrap();
        let b = execute(&resolved, &options).unwrap();
        for (ca, cb) in a.cells.iter().zip(b.cells.iter()) {
            assert_eq!(ca.run_csvs, cb.run_csvs);
            assert_eq!(ca.aggregate_csv, cb.aggregate_csv);
        }
    }

    #[test]
    fn csv_names_are_stable() {
        assert_eq!(
            run_csv_name(AlgorithmKind::Cwtm, 0.02, 3),
            "runs/cwtm_a0.02_s3.csv"
        );
        assert_eq!(
            aggregate_csv_name(AlgorithmKind::Rvo, 0.04),
            "aggregate_rvo_a0.04.csv"
        );
    }
}
