//! The synchronous round loop: broadcast, filter, gradient update, with the
//! per-algorithm wiring of the four resilient aggregation schemes.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryPlacement, ByzantineStrategy, Payload, StrategyKind};
use crate::error::{Error, Result};
use crate::filters::{
    cw_average, cw_mm_filt, dist_filt, full_average, full_mm_filt, safe_point, Field,
    NeighborhoodView, ReceivedState, SafePointLimits, WeightPolicy,
};
use crate::functions::{CostEnsemble, MinimizerGeometry};
use crate::graph::Digraph;
use crate::metrics::{self, AuditRecord, KeptSummary, RawRun, RunTrace};
use crate::seed::{self, purpose};

/// The four resilient aggregation algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Sdmmfd,
    Sdfd,
    Cwtm,
    Rvo,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] = [
        AlgorithmKind::Sdmmfd,
        AlgorithmKind::Sdfd,
        AlgorithmKind::Cwtm,
        AlgorithmKind::Rvo,
    ];

    /// Whether the algorithm carries the auxiliary estimate channel.
    pub fn uses_aux(&self) -> bool {
        matches!(self, AlgorithmKind::Sdmmfd | AlgorithmKind::Sdfd)
    }

    /// Graph robustness each algorithm requires for its guarantees.
    pub fn required_robustness(&self, d: usize, f: usize) -> usize {
        match self {
            AlgorithmKind::Sdmmfd => (2 * d + 1) * f + 1,
            AlgorithmKind::Sdfd => 2 * f + 1,
            AlgorithmKind::Cwtm => 2 * f + 1,
            AlgorithmKind::Rvo => (d + 1) * f + 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::Sdmmfd => "sdmmfd",
            AlgorithmKind::Sdfd => "sdfd",
            AlgorithmKind::Cwtm => "cwtm",
            AlgorithmKind::Rvo => "rvo",
        }
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sdmmfd" => Ok(AlgorithmKind::Sdmmfd),
            "sdfd" => Ok(AlgorithmKind::Sdfd),
            "cwtm" => Ok(AlgorithmKind::Cwtm),
            "rvo" => Ok(AlgorithmKind::Rvo),
            other => Err(Error::config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// One synchronous round's state: main vector per agent, auxiliary vector
/// per agent when the algorithm carries one, and the fabricated payloads of
/// the round for audit (`(sender, receiver)`, receiver = sender for the
/// stored self-broadcast of a Byzantine agent).
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub round: usize,
    pub x: Vec<DVector<f64>>,
    pub y: Option<Vec<DVector<f64>>>,
    pub outbox: BTreeMap<(usize, usize), Payload>,
}

impl NetworkState {
    pub fn dim(&self) -> usize {
        self.x.first().map(|v| v.len()).unwrap_or(0)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// Initializes round 0: main states uniform in the init box; algorithms with
/// an auxiliary channel start it at each agent's own (closed-form when
/// available) local minimizer. Byzantine agents get box-uniform main states
/// and their auxiliary slot mirrors it (bookkeeping only; regular agents
/// only ever see fabricated payloads).
pub fn init(
    kind: AlgorithmKind,
    n: usize,
    ensemble: &CostEnsemble,
    placement: &AdversaryPlacement,
    seed: u64,
    init_box: &[(f64, f64)],
) -> Result<NetworkState> {
    let d = ensemble.dim();
    if init_box.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: init_box.len(),
        });
    }
    for (lo, hi) in init_box {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config(format!("invalid init box interval [{lo}, {hi}]")));
        }
    }

    let mut x = Vec::with_capacity(n);
    for agent in 0..n {
        let mut rng = seed::stream(seed, &[purpose::INIT, agent as u64]);
        x.push(DVector::from_fn(d, |i, _| {
            let (lo, hi) = init_box[i];
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        }));
    }

    let y = if kind.uses_aux() {
        let mut y = Vec::with_capacity(n);
        for agent in 0..n {
            if placement.is_byzantine(agent) {
                y.push(x[agent].clone());
            } else {
                let cost = ensemble.cost(agent).ok_or_else(|| {
                    Error::config(format!("ensemble does not cover regular agent {agent}"))
                })?;
                let minimizer = match cost.minimizer() {
                    Some(m) => m,
                    None => {
                        // Approximate local minimizer by descent on f_i.
                        let mut z = x[agent].clone();
                        let step = 1.0 / cost.gradient_lipschitz();
                        for _ in 0..1_000_000 {
                            let g = cost.gradient(&z)?;
                            if g.norm() < 1e-10 {
                                break;
                            }
                            z -= g * step;
                        }
                        z
                    }
                };
                y.push(minimizer);
            }
        }
        Some(y)
    } else {
        None
    };

    Ok(NetworkState {
        round: 0,
        x,
        y,
        outbox: BTreeMap::new(),
    })
}

/// Per-agent artifacts of one step, for traces and audit.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub agent: usize,
    pub x_tilde: DVector<f64>,
    pub grad_norm: f64,
    pub kept: KeptSummary,
}

/// One synchronous round for every agent. Regular agents assemble their
/// neighborhood view (true states from regular in-neighbors, fabricated
/// payloads from Byzantine ones), filter, and take the gradient step
/// `x <- x_tilde - alpha * grad f_i(x_tilde)`. Byzantine agents' stored
/// state becomes their fabricated self-broadcast.
///
/// Graph robustness and step-size admissibility are validated when the
/// experiment is configured, not per step.
pub fn step(
    kind: AlgorithmKind,
    graph: &Digraph,
    state: &NetworkState,
    ensemble: &CostEnsemble,
    placement: &AdversaryPlacement,
    strategies: &BTreeMap<usize, ByzantineStrategy>,
    alpha: f64,
    safe_limits: &SafePointLimits,
) -> Result<(NetworkState, Vec<StepRecord>)> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("invalid step size {alpha}")));
    }
    let n = graph.n();
    if state.n() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: state.n(),
        });
    }
    let aux = kind.uses_aux();
    let f = placement.f;
    let policy = WeightPolicy::uniform(n);
    let round = state.round;

    let mut new_x = state.x.clone();
    let mut new_y = state.y.clone();
    let mut outbox = BTreeMap::new();
    let mut records = Vec::new();

    for agent in 0..n {
        if placement.is_byzantine(agent) {
            continue;
        }
        let mut received = Vec::with_capacity(graph.in_neighbors(agent).len());
        for &j in graph.in_neighbors(agent) {
            if placement.is_byzantine(j) {
                let strategy = strategies.get(&j).ok_or_else(|| {
                    Error::config(format!("no strategy configured for Byzantine agent {j}"))
                })?;
                let payload = strategy.fabricate(round, agent, graph, placement, state, aux)?;
                outbox.insert((j, agent), payload.clone());
                received.push(ReceivedState {
                    sender: j,
                    x: payload.x,
                    y: payload.y,
                });
            } else {
                received.push(ReceivedState {
                    sender: j,
                    x: state.x[j].clone(),
                    y: aux.then(|| state.y.as_ref().expect("aux state")[j].clone()),
                });
            }
        }
        let view = NeighborhoodView::new(
            agent,
            state.x[agent].clone(),
            aux.then(|| state.y.as_ref().expect("aux state")[agent].clone()),
            received,
        )?;

        let (x_tilde, y_tilde, kept) = filter_step(kind, &view, f, &policy, safe_limits)?;

        let cost = ensemble.cost(agent).ok_or_else(|| {
            Error::config(format!("ensemble does not cover regular agent {agent}"))
        })?;
        let grad = cost.gradient(&x_tilde)?;
        let grad_norm = grad.norm();
        new_x[agent] = &x_tilde - grad * alpha;
        if let (Some(ys), Some(yt)) = (new_y.as_mut(), y_tilde) {
            ys[agent] = yt;
        }
        records.push(StepRecord {
            agent,
            x_tilde,
            grad_norm,
            kept,
        });
    }

    for &b in &placement.byzantine {
        if b >= n {
            continue;
        }
        let strategy = strategies.get(&b).ok_or_else(|| {
            Error::config(format!("no strategy configured for Byzantine agent {b}"))
        })?;
        let payload = strategy.fabricate(round, b, graph, placement, state, aux)?;
        outbox.insert((b, b), payload.clone());
        new_x[b] = payload.x;
        if let (Some(ys), Some(py)) = (new_y.as_mut(), payload.y) {
            ys[b] = py;
        }
    }

    for (agent, v) in new_x.iter().enumerate() {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { round, agent });
        }
    }
    if let Some(ys) = &new_y {
        for (agent, v) in ys.iter().enumerate() {
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::Divergence { round, agent });
            }
        }
    }

    Ok((
        NetworkState {
            round: round + 1,
            x: new_x,
            y: new_y,
            outbox,
        },
        records,
    ))
}

fn filter_step(
    kind: AlgorithmKind,
    view: &NeighborhoodView,
    f: usize,
    policy: &WeightPolicy,
    safe_limits: &SafePointLimits,
) -> Result<(DVector<f64>, Option<DVector<f64>>, KeptSummary)> {
    match kind {
        AlgorithmKind::Sdmmfd => {
            let v_dist = dist_filt(view, f)?;
            let v_mm = full_mm_filt(view, &v_dist, f)?;
            let x_tilde = full_average(view, &v_mm, policy)?;
            let y_dims = cw_mm_filt(view, &view.candidate_ids(), f, Field::Aux)?;
            let y_tilde = cw_average(view, &y_dims, policy, Field::Aux)?;
            let kept = KeptSummary::Dist {
                dist: v_dist.into_iter().collect(),
                mm: Some(v_mm.into_iter().collect()),
                aux_dims: y_dims
                    .into_iter()
                    .map(|s| s.into_iter().collect())
                    .collect(),
            };
            Ok((x_tilde, Some(y_tilde), kept))
        }
        AlgorithmKind::Sdfd => {
            let v_dist = dist_filt(view, f)?;
            let x_tilde = full_average(view, &v_dist, policy)?;
            let y_dims = cw_mm_filt(view, &view.candidate_ids(), f, Field::Aux)?;
            let y_tilde = cw_average(view, &y_dims, policy, Field::Aux)?;
            let kept = KeptSummary::Dist {
                dist: v_dist.into_iter().collect(),
                mm: None,
                aux_dims: y_dims
                    .into_iter()
                    .map(|s| s.into_iter().collect())
                    .collect(),
            };
            Ok((x_tilde, Some(y_tilde), kept))
        }
        AlgorithmKind::Cwtm => {
            let dims = cw_mm_filt(view, &view.candidate_ids(), f, Field::Main)?;
            let x_tilde = cw_average(view, &dims, policy, Field::Main)?;
            let kept = KeptSummary::Cw {
                dims: dims.into_iter().map(|s| s.into_iter().collect()).collect(),
            };
            Ok((x_tilde, None, kept))
        }
        AlgorithmKind::Rvo => {
            let x_tilde = safe_point(view, f, safe_limits)?;
            let kept = KeptSummary::Safe {
                candidates: view.candidate_ids().len(),
            };
            Ok((x_tilde, None, kept))
        }
    }
}

/// Everything one seeded run needs.
pub struct RunParams<'a> {
    pub kind: AlgorithmKind,
    pub alpha: f64,
    pub rounds: usize,
    pub run_seed: u64,
    pub run_index: usize,
    pub graph: &'a Digraph,
    /// Robustness the graph is known (verified or certified) to have.
    pub claimed_robustness: usize,
    pub ensemble: &'a CostEnsemble,
    pub geometry: &'a MinimizerGeometry,
    pub placement: &'a AdversaryPlacement,
    pub strategy: &'a StrategyKind,
    pub init_box: &'a [(f64, f64)],
    pub safe_limits: SafePointLimits,
    /// Retain full per-round states in the trace.
    pub record_states: bool,
    /// Collect per-(round, agent) audit records.
    pub audit: bool,
}

/// Executes one seeded run and assembles its trace. Deterministic given the
/// run seed.
pub fn run(params: &RunParams) -> Result<RunTrace> {
    let n = params.graph.n();
    let d = params.ensemble.dim();
    let regular_ids = params.placement.regular_ids(n);

    let ensemble_ids: Vec<usize> = params.ensemble.agent_ids().collect();
    if ensemble_ids != regular_ids {
        return Err(Error::config(
            "ensemble must cover exactly the regular agents".to_string(),
        ));
    }
    let required = params.kind.required_robustness(d, params.placement.f);
    if params.claimed_robustness < required {
        return Err(Error::config(format!(
            "{} requires a {required}-robust graph, got robustness {}",
            params.kind, params.claimed_robustness
        )));
    }
    if !crate::adversary::validate_f_local(params.graph, params.placement) {
        return Err(Error::config(
            "Byzantine placement violates the F-local model".to_string(),
        ));
    }

    let strategies: BTreeMap<usize, ByzantineStrategy> = params
        .placement
        .byzantine
        .iter()
        .map(|&b| {
            (
                b,
                ByzantineStrategy::new(
                    params.strategy.clone(),
                    seed::mix(params.run_seed, &[purpose::ADVERSARY, b as u64]),
                ),
            )
        })
        .collect();

    let mut state = init(
        params.kind,
        n,
        params.ensemble,
        params.placement,
        params.run_seed,
        params.init_box,
    )?;

    let mut xs = Vec::with_capacity(params.rounds + 1);
    let mut ys = params.kind.uses_aux().then(Vec::new);
    let mut x_tildes = Vec::with_capacity(params.rounds);
    let mut grad_norms = Vec::with_capacity(params.rounds);
    let mut audit = params.audit.then(Vec::new);

    xs.push(state.x.clone());
    if let (Some(ys), Some(y)) = (ys.as_mut(), state.y.as_ref()) {
        ys.push(y.clone());
    }

    for _ in 0..params.rounds {
        let (next, records) = step(
            params.kind,
            params.graph,
            &state,
            params.ensemble,
            params.placement,
            &strategies,
            params.alpha,
            &params.safe_limits,
        )?;
        if let Some(audit) = audit.as_mut() {
            for r in &records {
                audit.push(AuditRecord {
                    v: metrics::AUDIT_SCHEMA_VERSION,
                    round: state.round,
                    agent: r.agent,
                    x: state.x[r.agent].iter().copied().collect(),
                    x_tilde: r.x_tilde.iter().copied().collect(),
                    grad_norm: r.grad_norm,
                    kept: r.kept.clone(),
                });
            }
        }
        let mut tilde_row = Vec::with_capacity(records.len());
        let mut grad_row = Vec::with_capacity(records.len());
        for r in records {
            tilde_row.push(r.x_tilde);
            grad_row.push(r.grad_norm);
        }
        x_tildes.push(tilde_row);
        grad_norms.push(grad_row);

        state = next;
        xs.push(state.x.clone());
        if let (Some(ys), Some(y)) = (ys.as_mut(), state.y.as_ref()) {
            ys.push(y.clone());
        }
    }

    let raw = RawRun {
        kind: params.kind,
        alpha: params.alpha,
        run_seed: params.run_seed,
        run_index: params.run_index,
        regular_ids,
        xs,
        ys,
        x_tildes,
        grad_norms,
        audit,
        record_states: params.record_states,
    };
    metrics::finalize(raw, params.ensemble, params.geometry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{sample_ensemble, global_minimizer, CostFunction, QuadraticCost};
    use std::sync::Arc;

    fn single_agent_setup(center: f64) -> (Digraph, CostEnsemble, MinimizerGeometry, AdversaryPlacement) {
        let graph = Digraph::new(1);
        let cost = QuadraticCost::isotropic(DVector::from_vec(vec![center]), 1.0, 0.0).unwrap();
        let mut map: BTreeMap<usize, Arc<dyn CostFunction>> = BTreeMap::new();
        map.insert(0, Arc::new(cost));
        let ensemble = CostEnsemble::new(map).unwrap();
        let geometry = global_minimizer(&ensemble).unwrap();
        let placement = AdversaryPlacement::new(Default::default(), 0);
        (graph, ensemble, geometry, placement)
    }

    #[test]
    fn step_gradient_hand_case() {
        // Lone CWTM agent at 0 with f = (x-5)^2/2 and alpha = 0.1 moves to 0.5.
        let (graph, ensemble, _, placement) = single_agent_setup(5.0);
        let state = NetworkState {
            round: 0,
            x: vec![DVector::from_vec(vec![0.0])],
            y: None,
            outbox: BTreeMap::new(),
        };
        let (next, records) = step(
            AlgorithmKind::Cwtm,
            &graph,
            &state,
            &ensemble,
            &placement,
            &BTreeMap::new(),
            0.1,
            &SafePointLimits::default(),
        )
        .unwrap();
        assert!((next.x[0][0] - 0.5).abs() < 1e-15);
        assert_eq!(records.len(), 1);
        assert!((records[0].grad_norm - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_is_pure_consensus() {
        let (graph, ensemble, _, placement) = single_agent_setup(5.0);
        let state = NetworkState {
            round: 0,
            x: vec![DVector::from_vec(vec![3.0])],
            y: None,
            outbox: BTreeMap::new(),
        };
        let (next, _) = step(
            AlgorithmKind::Cwtm,
            &graph,
            &state,
            &ensemble,
            &placement,
            &BTreeMap::new(),
            0.0,
            &SafePointLimits::default(),
        )
        .unwrap();
        assert_eq!(next.x[0][0], 3.0);
    }

    #[test]
    fn identical_minimizers_are_a_fixed_point() {
        // All regular agents at the shared minimizer stay there.
        let graph = Digraph::complete(5);
        let ensemble = sample_ensemble(2, &[0, 1, 2, 3, 4], 0.0, (1.0, 2.0), (2.0, 3.0), 4).unwrap();
        let geometry = global_minimizer(&ensemble).unwrap();
        let placement = AdversaryPlacement::new(Default::default(), 1);
        let m = geometry.x_star.clone();
        for kind in AlgorithmKind::ALL {
            let y = kind.uses_aux().then(|| vec![m.clone(); 5]);
            let state = NetworkState {
                round: 0,
                x: vec![m.clone(); 5],
                y,
                outbox: BTreeMap::new(),
            };
            let (next, _) = step(
                kind,
                &graph,
                &state,
                &ensemble,
                &placement,
                &BTreeMap::new(),
                0.1,
                &SafePointLimits::default(),
            )
            .unwrap();
            for x in &next.x {
                assert!((x - &m).norm() < 1e-10, "{kind} drifted");
            }
        }
    }

    #[test]
    fn init_degenerate_box_and_determinism() {
        let (_, ensemble, _, placement) = single_agent_setup(2.0);
        let init_box = [(1.5, 1.5)];
        let s1 = init(AlgorithmKind::Sdmmfd, 1, &ensemble, &placement, 7, &init_box).unwrap();
        let s2 = init(AlgorithmKind::Sdmmfd, 1, &ensemble, &placement, 7, &init_box).unwrap();
        assert_eq!(s1.x[0][0], 1.5);
        assert_eq!(s1.x, s2.x);
        // Auxiliary starts at the exact local minimizer.
        assert_eq!(s1.y.as_ref().unwrap()[0][0], 2.0);
    }

    #[test]
    fn single_agent_run_converges() {
        let (graph, ensemble, geometry, placement) = single_agent_setup(5.0);
        let strategy = StrategyKind::Blend { eta: 1.2 };
        let trace = run(&RunParams {
            kind: AlgorithmKind::Cwtm,
            alpha: 0.5,
            rounds: 2000,
            run_seed: 3,
            run_index: 0,
            graph: &graph,
            claimed_robustness: 1,
            ensemble: &ensemble,
            geometry: &geometry,
            placement: &placement,
            strategy: &strategy,
            init_box: &[(-10.0, 10.0)],
            safe_limits: SafePointLimits::default(),
            record_states: false,
            audit: false,
        })
        .unwrap();
        let last = trace.rounds.last().unwrap();
        assert!(last.dist_to_xstar < 1e-6, "distance {}", last.dist_to_xstar);
        // Scalar gradient descent contracts monotonically.
        for w in trace.rounds.windows(2) {
            assert!(w[1].dist_to_xstar <= w[0].dist_to_xstar + 1e-12);
        }
    }

    #[test]
    fn zero_round_run_has_single_snapshot() {
        let (graph, ensemble, geometry, placement) = single_agent_setup(1.0);
        let strategy = StrategyKind::Blend { eta: 1.2 };
        let trace = run(&RunParams {
            kind: AlgorithmKind::Cwtm,
            alpha: 0.1,
            rounds: 0,
            run_seed: 3,
            run_index: 0,
            graph: &graph,
            claimed_robustness: 1,
            ensemble: &ensemble,
            geometry: &geometry,
            placement: &placement,
            strategy: &strategy,
            init_box: &[(-1.0, 1.0)],
            safe_limits: SafePointLimits::default(),
            record_states: false,
            audit: false,
        })
        .unwrap();
        assert_eq!(trace.rounds.len(), 1);
        assert!(trace.rounds[0].gamma_eff.is_none());
    }

    #[test]
    fn run_rejects_insufficient_robustness() {
        let (graph, ensemble, geometry, placement) = single_agent_setup(1.0);
        let strategy = StrategyKind::Blend { eta: 1.2 };
        let err = run(&RunParams {
            kind: AlgorithmKind::Sdmmfd,
            alpha: 0.1,
            rounds: 1,
            run_seed: 0,
            run_index: 0,
            graph: &graph,
            claimed_robustness: 0,
            ensemble: &ensemble,
            geometry: &geometry,
            placement: &placement,
            strategy: &strategy,
            init_box: &[(-1.0, 1.0)],
            safe_limits: SafePointLimits::default(),
            record_states: false,
            audit: false,
        })
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
