//! Per-round and per-run measurement: distances, optimality gaps, diameters,
//! effective contraction factors, geometric-rate fitting, and the CSV
//! schemas used by the run harness.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::AlgorithmKind;
use crate::error::{Error, Result};
use crate::functions::{CostEnsemble, MinimizerGeometry};

/// Version tag carried by every audit record.
pub const AUDIT_SCHEMA_VERSION: u32 = 1;

/// Kept-set audit of one filter invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeptSummary {
    /// Distance filter output, optional full min-max refinement, and the
    /// per-dimension kept sets of the auxiliary channel.
    Dist {
        dist: Vec<usize>,
        mm: Option<Vec<usize>>,
        aux_dims: Vec<Vec<usize>>,
    },
    /// Per-dimension kept sets of the coordinate-wise trim.
    Cw { dims: Vec<Vec<usize>> },
    /// Safe-point aggregation (the candidate pool size; the output is a
    /// fresh point rather than a kept subset).
    Safe { candidates: usize },
}

/// One `(round, agent)` audit line of the optional round-trace dump
/// (line-delimited JSON, schema version [`AUDIT_SCHEMA_VERSION`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub v: u32,
    pub round: usize,
    pub agent: usize,
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub grad_norm: f64,
    pub kept: KeptSummary,
}

/// Raw per-round data captured by the engine before measurement.
pub struct RawRun {
    pub kind: AlgorithmKind,
    pub alpha: f64,
    pub run_seed: u64,
    pub run_index: usize,
    pub regular_ids: Vec<usize>,
    /// States at rounds `0..=K` for every agent.
    pub xs: Vec<Vec<DVector<f64>>>,
    /// Auxiliary states at rounds `0..=K`, when the algorithm carries them.
    pub ys: Option<Vec<Vec<DVector<f64>>>>,
    /// Filtered intermediate states at rounds `0..K` (regular agents, in
    /// `regular_ids` order).
    pub x_tildes: Vec<Vec<DVector<f64>>>,
    /// Gradient norms at the filtered states, same shape as `x_tildes`.
    pub grad_norms: Vec<Vec<f64>>,
    pub audit: Option<Vec<AuditRecord>>,
    pub record_states: bool,
}

/// One row of the per-run time series.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub k: usize,
    pub mean_state: DVector<f64>,
    /// `||mean_state - x*||`.
    pub dist_to_xstar: f64,
    /// `f(mean_state) - f*`.
    pub optimality_gap: f64,
    /// Max pairwise distance between regular states.
    pub diameter: f64,
    /// `max_i ||x_i - x*||` over regular agents.
    pub max_dist_to_xstar: f64,
    /// `max_i ||x_i - x_c||` over regular agents.
    pub max_dist_to_center: f64,
    /// Tightest contraction factor of the round's filter step (`None` on the
    /// final snapshot, which has no step).
    pub gamma_eff: Option<f64>,
    /// Max gradient norm at the filtered states.
    pub max_grad_norm: Option<f64>,
    /// `max_i ||x~_i - x_c|| - sqrt(gamma) max_j ||x_j - x_c|| - c_k`, the
    /// signed slack of the contraction inequality at the algorithm's
    /// guaranteed factor (perturbation `c_k = 2 max_i ||y_i - y_inf||` for
    /// auxiliary-channel algorithms, zero otherwise).
    pub contraction_residual: Option<f64>,
    /// `max_i ||y_i - y_inf||`, when the auxiliary channel exists.
    pub max_y_dev: Option<f64>,
}

/// Full per-round states retained when `record_states` is set.
#[derive(Debug)]
pub struct StoredStates {
    pub regular_ids: Vec<usize>,
    pub xs: Vec<Vec<DVector<f64>>>,
    pub ys: Option<Vec<Vec<DVector<f64>>>>,
    pub x_tildes: Vec<Vec<DVector<f64>>>,
}

/// Metrics of one seeded run.
#[derive(Debug)]
pub struct RunTrace {
    pub kind: AlgorithmKind,
    pub alpha: f64,
    pub run_seed: u64,
    pub run_index: usize,
    pub rounds: Vec<RoundRecord>,
    /// `min_i ||x_i* - x*||` over regular agents.
    pub min_local_dist: f64,
    /// `min_i f(x_i*) - f*` over regular agents.
    pub min_local_gap: f64,
    /// Contraction center: the enclosing-ball center for CWTM/RVO, the
    /// final-round auxiliary consensus estimate for SDMMFD/SDFD.
    pub x_c: DVector<f64>,
    pub y_inf: Option<DVector<f64>>,
    /// `max_i ||x_c - x_i*||` over regular agents.
    pub measured_r_c: f64,
    pub states: Option<StoredStates>,
    pub audit: Option<Vec<AuditRecord>>,
}

impl RunTrace {
    /// Per-run max of the effective contraction factor.
    pub fn max_gamma_eff(&self) -> Option<f64> {
        self.rounds
            .iter()
            .filter_map(|r| r.gamma_eff)
            .fold(None, |acc, g| Some(acc.map_or(g, |a: f64| a.max(g))))
    }

    /// Worst (most positive) contraction residual across rounds.
    pub fn max_contraction_residual(&self) -> Option<f64> {
        self.rounds
            .iter()
            .filter_map(|r| r.contraction_residual)
            .fold(None, |acc, g| Some(acc.map_or(g, |a: f64| a.max(g))))
    }

    /// Series of `max_i ||x_i[k] - x_c||`.
    pub fn center_distance_series(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.max_dist_to_center).collect()
    }

    /// Series of the regular-state diameter.
    pub fn diameter_series(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.diameter).collect()
    }
}

/// Tightest contraction factor making the contraction inequality hold with
/// zero perturbation: `(max_i ||x~_i - x_c|| / max_j ||x_j - x_c||)^2`.
/// Reports 1 when all states sit at the center.
pub fn effective_gamma(
    x_tilde: &[DVector<f64>],
    x_regular: &[DVector<f64>],
    x_c: &DVector<f64>,
) -> f64 {
    let num = x_tilde
        .iter()
        .map(|v| (v - x_c).norm())
        .fold(0.0, f64::max);
    let den = x_regular
        .iter()
        .map(|v| (v - x_c).norm())
        .fold(0.0, f64::max);
    if den == 0.0 {
        1.0
    } else {
        (num / den).powi(2)
    }
}

/// Mean state, distance, gap, diameter and worst-case distance over the
/// regular states of a single round.
pub fn round_metrics(
    x_regular: &[DVector<f64>],
    ensemble: &CostEnsemble,
    geometry: &MinimizerGeometry,
) -> Result<(DVector<f64>, f64, f64, f64, f64)> {
    let first = x_regular
        .first()
        .ok_or(Error::EmptyInput("regular states"))?;
    let mut mean = DVector::zeros(first.len());
    for x in x_regular {
        mean += x;
    }
    mean /= x_regular.len() as f64;
    let dist = (&mean - &geometry.x_star).norm();
    let gap = ensemble.average_value(&mean)? - geometry.f_star;
    let mut diameter = 0.0f64;
    for (i, a) in x_regular.iter().enumerate() {
        for b in &x_regular[i + 1..] {
            diameter = diameter.max((a - b).norm());
        }
    }
    let max_dist = x_regular
        .iter()
        .map(|x| (x - &geometry.x_star).norm())
        .fold(0.0, f64::max);
    Ok((mean, dist, gap, diameter, max_dist))
}

/// Median of a nonempty slice.
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Geometric factor of a decaying series: subtracts the tail plateau (median
/// of the last 10%), then takes the median of consecutive ratios over the
/// window. Values above 1 indicate non-contraction.
pub fn fit_geometric_rate(series: &[f64], window: std::ops::Range<usize>) -> Result<f64> {
    if series.len() < 3 {
        return Err(Error::Fit("series too short".into()));
    }
    let tail_len = (series.len() / 10).max(1);
    let plateau = median(&series[series.len() - tail_len..]);
    let adjusted: Vec<f64> = series.iter().map(|v| v - plateau).collect();

    let lo = window.start.min(series.len() - 2);
    let hi = window.end.min(series.len() - 1);
    if lo >= hi {
        return Err(Error::Fit("empty fitting window".into()));
    }
    let mut ratios = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        if adjusted[k] <= 0.0 || adjusted[k + 1] <= 0.0 {
            return Err(Error::Fit(format!(
                "non-positive adjusted value near round {k} (no transient to fit)"
            )));
        }
        ratios.push(adjusted[k + 1] / adjusted[k]);
    }
    Ok(median(&ratios))
}

/// Default fitting window (rounds 5 to 50).
pub fn default_fit_window() -> std::ops::Range<usize> {
    5..50
}

/// Window covering the geometric transient of a decaying series: from round
/// `start_hint` (earlier when the decay is fast) up to the last round still
/// clearly above the plateau (5% of the initial height), capped at
/// `max_end`. `None` when the series shows no usable transient.
pub fn transient_window(
    series: &[f64],
    start_hint: usize,
    max_end: usize,
) -> Option<std::ops::Range<usize>> {
    if series.len() < 3 {
        return None;
    }
    let tail_len = (series.len() / 10).max(1);
    let plateau = median(&series[series.len() - tail_len..]);
    let h0 = series[0] - plateau;
    if h0 <= 0.0 {
        return None;
    }
    let threshold = 0.05 * h0;
    let cap = max_end.min(series.len() - 1);
    let dip = series
        .iter()
        .position(|v| v - plateau <= threshold)
        .unwrap_or(series.len());
    // Last index whose adjusted value is still above the threshold.
    let end = dip.saturating_sub(1).min(cap);
    let start = if end >= start_hint + 3 {
        start_hint
    } else if end >= 3 {
        1
    } else {
        0
    };
    (end > start).then_some(start..end)
}

/// Builds the trace of a finished run.
pub fn finalize(
    raw: RawRun,
    ensemble: &CostEnsemble,
    geometry: &MinimizerGeometry,
) -> Result<RunTrace> {
    let total_rounds = raw.xs.len();
    if total_rounds == 0 {
        return Err(Error::EmptyInput("run snapshots"));
    }
    if raw.x_tildes.len() + 1 != total_rounds || raw.grad_norms.len() != raw.x_tildes.len() {
        return Err(Error::state("inconsistent snapshot counts".to_string()));
    }

    // Contraction center: auxiliary consensus estimate (mean of the final
    // regular auxiliary states) for SDMMFD/SDFD, enclosing-ball center
    // otherwise.
    let y_inf = raw.ys.as_ref().map(|ys| {
        let last = ys.last().expect("non-empty aux snapshots");
        let mut mean = DVector::zeros(last[0].len());
        for &id in &raw.regular_ids {
            mean += &last[id];
        }
        mean / raw.regular_ids.len() as f64
    });
    let x_c = y_inf.clone().unwrap_or_else(|| geometry.c_star.clone());
    let gamma_required = match raw.kind {
        AlgorithmKind::Cwtm => ensemble.dim() as f64,
        _ => 1.0,
    };

    let mut local_minimizers = Vec::with_capacity(raw.regular_ids.len());
    for &id in &raw.regular_ids {
        let cost = ensemble
            .cost(id)
            .ok_or_else(|| Error::config(format!("ensemble missing regular agent {id}")))?;
        let m = cost
            .minimizer()
            .ok_or_else(|| Error::state("local minimizer unavailable for metrics"))?;
        local_minimizers.push(m);
    }
    let measured_r_c = local_minimizers
        .iter()
        .map(|m| (m - &x_c).norm())
        .fold(0.0, f64::max);
    let min_local_dist = local_minimizers
        .iter()
        .map(|m| (m - &geometry.x_star).norm())
        .fold(f64::INFINITY, f64::min);
    let mut min_local_gap = f64::INFINITY;
    for m in &local_minimizers {
        min_local_gap = min_local_gap.min(ensemble.average_value(m)? - geometry.f_star);
    }

    let mut rounds = Vec::with_capacity(total_rounds);
    for k in 0..total_rounds {
        let x_regular: Vec<DVector<f64>> = raw
            .regular_ids
            .iter()
            .map(|&id| raw.xs[k][id].clone())
            .collect();
        let (mean_state, dist_to_xstar, optimality_gap, diameter, max_dist_to_xstar) =
            round_metrics(&x_regular, ensemble, geometry)?;
        let max_dist_to_center = x_regular
            .iter()
            .map(|x| (x - &x_c).norm())
            .fold(0.0, f64::max);

        let max_y_dev = raw.ys.as_ref().zip(y_inf.as_ref()).map(|(ys, y_inf)| {
            raw.regular_ids
                .iter()
                .map(|&id| (&ys[k][id] - y_inf).norm())
                .fold(0.0, f64::max)
        });

        let (gamma_eff, max_grad_norm, contraction_residual) = if k < raw.x_tildes.len() {
            let tilde = &raw.x_tildes[k];
            let gamma = effective_gamma(tilde, &x_regular, &x_c);
            let grad = raw.grad_norms[k].iter().copied().fold(0.0, f64::max);
            let perturbation = max_y_dev.map(|d| 2.0 * d).unwrap_or(0.0);
            let lhs = tilde.iter().map(|v| (v - &x_c).norm()).fold(0.0, f64::max);
            let residual = lhs - gamma_required.sqrt() * max_dist_to_center - perturbation;
            (Some(gamma), Some(grad), Some(residual))
        } else {
            (None, None, None)
        };

        rounds.push(RoundRecord {
            k,
            mean_state,
            dist_to_xstar,
            optimality_gap,
            diameter,
            max_dist_to_xstar,
            max_dist_to_center,
            gamma_eff,
            max_grad_norm,
            contraction_residual,
            max_y_dev,
        });
    }

    let states = raw.record_states.then(|| StoredStates {
        regular_ids: raw.regular_ids.clone(),
        xs: raw.xs,
        ys: raw.ys,
        x_tildes: raw.x_tildes,
    });

    Ok(RunTrace {
        kind: raw.kind,
        alpha: raw.alpha,
        run_seed: raw.run_seed,
        run_index: raw.run_index,
        rounds,
        min_local_dist,
        min_local_gap,
        x_c,
        y_inf,
        measured_r_c,
        states,
        audit: raw.audit,
    })
}

/// Fixed-format float for CSV output (13 significant digits, deterministic).
pub fn fmt_value(v: f64) -> String {
    format!("{v:.12e}")
}

pub const RUN_CSV_HEADER: &str =
    "run_id,k,dist_to_xstar,optimality_gap,diameter,gamma_eff,max_grad_norm,max_dist_to_xstar";

/// Per-run CSV: one row per round; step-derived columns are empty on the
/// final snapshot row.
pub fn write_run_csv(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(trace.rounds.len() * 96);
    out.push_str(RUN_CSV_HEADER);
    out.push('\n');
    for r in &trace.rounds {
        let gamma = r.gamma_eff.map(fmt_value).unwrap_or_default();
        let grad = r.max_grad_norm.map(fmt_value).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            trace.run_index,
            r.k,
            fmt_value(r.dist_to_xstar),
            fmt_value(r.optimality_gap),
            fmt_value(r.diameter),
            gamma,
            grad,
            fmt_value(r.max_dist_to_xstar),
        )
        .unwrap();
    }
    out
}

/// Metric names aggregated across runs, in fixed column order.
pub const AGGREGATE_METRICS: [&str; 6] = [
    "dist_to_xstar",
    "optimality_gap",
    "diameter",
    "gamma_eff",
    "max_grad_norm",
    "max_dist_to_xstar",
];

pub const AGGREGATE_CSV_HEADER: &str = "k,metric,mean,std";

/// Per-round mean and sample standard deviation of each metric across runs.
pub struct AggregateTable {
    /// `(k, metric) -> (mean, std)` with metric order as in
    /// [`AGGREGATE_METRICS`].
    pub rows: BTreeMap<(usize, usize), (f64, f64)>,
    pub rounds: usize,
}

fn metric_value(r: &RoundRecord, metric: usize) -> Option<f64> {
    match metric {
        0 => Some(r.dist_to_xstar),
        1 => Some(r.optimality_gap),
        2 => Some(r.diameter),
        3 => r.gamma_eff,
        4 => r.max_grad_norm,
        5 => Some(r.max_dist_to_xstar),
        _ => None,
    }
}

/// Aggregates traces of the same `(algorithm, alpha)` cell, joining runs in
/// the order given.
pub fn aggregate(traces: &[&RunTrace]) -> Result<AggregateTable> {
    let first = traces.first().ok_or(Error::EmptyInput("traces"))?;
    let rounds = first.rounds.len();
    for t in traces {
        if t.rounds.len() != rounds {
            return Err(Error::state("traces disagree on round count".to_string()));
        }
    }
    let mut rows = BTreeMap::new();
    for k in 0..rounds {
        for (m, _) in AGGREGATE_METRICS.iter().enumerate() {
            let values: Vec<f64> = traces
                .iter()
                .filter_map(|t| metric_value(&t.rounds[k], m))
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = if values.len() < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            rows.insert((k, m), (mean, std));
        }
    }
    Ok(AggregateTable { rows, rounds })
}

pub fn write_aggregate_csv(table: &AggregateTable) -> String {
    let mut out = String::new();
    out.push_str(AGGREGATE_CSV_HEADER);
    out.push('\n');
    for (&(k, m), &(mean, std)) in &table.rows {
        writeln!(
            out,
            "{},{},{},{}",
            k,
            AGGREGATE_METRICS[m],
            fmt_value(mean),
            fmt_value(std)
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{CostFunction, QuadraticCost};
    use std::sync::Arc;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn round_metrics_triangle() {
        let costs: BTreeMap<usize, Arc<dyn CostFunction>> = [
            (
                0usize,
                Arc::new(QuadraticCost::isotropic(v2(0.0, 0.0), 1.0, 0.0).unwrap())
                    as Arc<dyn CostFunction>,
            ),
            (
                1usize,
                Arc::new(QuadraticCost::isotropic(v2(3.0, 4.0), 1.0, 0.0).unwrap()),
            ),
        ]
        .into_iter()
        .collect();
        let ensemble = CostEnsemble::new(costs).unwrap();
        let geometry = crate::functions::global_minimizer(&ensemble).unwrap();
        let (mean, _dist, gap, diameter, _) =
            round_metrics(&[v2(0.0, 0.0), v2(3.0, 4.0)], &ensemble, &geometry).unwrap();
        assert_eq!(mean, v2(1.5, 2.0));
        assert!((diameter - 5.0).abs() < 1e-12);
        assert!(gap >= -1e-9);
    }

    #[test]
    fn round_metrics_at_optimum() {
        let costs: BTreeMap<usize, Arc<dyn CostFunction>> = [(
            0usize,
            Arc::new(QuadraticCost::isotropic(v2(1.0, 1.0), 2.0, 0.0).unwrap())
                as Arc<dyn CostFunction>,
        )]
        .into_iter()
        .collect();
        let ensemble = CostEnsemble::new(costs).unwrap();
        let geometry = crate::functions::global_minimizer(&ensemble).unwrap();
        let (_, dist, gap, diameter, _) =
            round_metrics(&[v2(1.0, 1.0), v2(1.0, 1.0)], &ensemble, &geometry).unwrap();
        assert!(dist < 1e-12);
        assert!(gap.abs() < 1e-12);
        assert_eq!(diameter, 0.0);
    }

    #[test]
    fn symmetric_pair_has_zero_gap_at_mean() {
        let costs: BTreeMap<usize, Arc<dyn CostFunction>> = [
            (
                0usize,
                Arc::new(
                    QuadraticCost::isotropic(DVector::from_vec(vec![0.0]), 1.0, 0.0).unwrap(),
                ) as Arc<dyn CostFunction>,
            ),
            (
                1usize,
                Arc::new(
                    QuadraticCost::isotropic(DVector::from_vec(vec![2.0]), 1.0, 0.0).unwrap(),
                ),
            ),
        ]
        .into_iter()
        .collect();
        let ensemble = CostEnsemble::new(costs).unwrap();
        let geometry = crate::functions::global_minimizer(&ensemble).unwrap();
        let states = [DVector::from_vec(vec![0.0]), DVector::from_vec(vec![2.0])];
        let (mean, dist, gap, _, _) = round_metrics(&states, &ensemble, &geometry).unwrap();
        assert!((mean[0] - 1.0).abs() < 1e-12);
        assert!(dist < 1e-12);
        assert!(gap.abs() < 1e-12);
    }

    #[test]
    fn effective_gamma_identity_and_collapse() {
        let x = vec![v2(1.0, 0.0), v2(0.0, 2.0)];
        let center = v2(0.0, 0.0);
        assert_eq!(effective_gamma(&x, &x, &center), 1.0);
        let collapsed = vec![center.clone(), center.clone()];
        assert_eq!(effective_gamma(&collapsed, &x, &center), 0.0);
        // All states at the center: reported as 1 by convention.
        assert_eq!(effective_gamma(&collapsed, &collapsed, &center), 1.0);
    }

    #[test]
    fn fit_rate_exact_geometric() {
        let series: Vec<f64> = (0..60).map(|k| 2f64.powi(-k)).collect();
        let rate = fit_geometric_rate(&series, default_fit_window()).unwrap();
        assert!((rate - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fit_rate_rejects_constant_series() {
        let series = vec![5.0; 60];
        assert!(matches!(
            fit_geometric_rate(&series, default_fit_window()),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn fit_rate_with_plateau() {
        let series: Vec<f64> = (0..200).map(|k| 3.0 * 0.9f64.powi(k) + 1.0).collect();
        let rate = fit_geometric_rate(&series, default_fit_window()).unwrap();
        assert!((rate - 0.9).abs() < 0.02, "fitted {rate}");
    }

    #[test]
    fn csv_formatting_is_fixed_width() {
        assert_eq!(fmt_value(0.5), "5.000000000000e-1");
        assert_eq!(fmt_value(0.0), "0.000000000000e0");
    }
}
