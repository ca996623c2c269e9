//! Byzantine behavior: placement validation against the F-local model and
//! per-receiver payload fabrication.
//!
//! Strategies are omniscient: fabrication reads the full network state (all
//! agents' current vectors), and may emit a different payload to every
//! receiver in the same round. Payloads are deterministic in
//! `(strategy seed, round, receiver)`.

use std::collections::BTreeSet;

use nalgebra::DVector;
use rand::Rng;

use crate::engine::NetworkState;
use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::seed::{self, purpose};

/// Static Byzantine placement for a run.
#[derive(Debug, Clone)]
pub struct AdversaryPlacement {
    pub byzantine: BTreeSet<usize>,
    pub f: usize,
}

impl AdversaryPlacement {
    pub fn new(byzantine: BTreeSet<usize>, f: usize) -> Self {
        AdversaryPlacement { byzantine, f }
    }

    pub fn is_byzantine(&self, id: usize) -> bool {
        self.byzantine.contains(&id)
    }

    pub fn regular_ids(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|id| !self.is_byzantine(*id)).collect()
    }
}

/// True iff every regular node has at most `F` Byzantine in-neighbors.
pub fn validate_f_local(g: &Digraph, placement: &AdversaryPlacement) -> bool {
    if placement.byzantine.iter().any(|&b| b >= g.n()) {
        return false;
    }
    (0..g.n())
        .filter(|id| !placement.is_byzantine(*id))
        .all(|id| {
            g.in_neighbors(id)
                .iter()
                .filter(|j| placement.is_byzantine(**j))
                .count()
                <= placement.f
        })
}

/// What a Byzantine sender fabricates for one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub x: DVector<f64>,
    pub y: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyKind {
    /// Samples each coordinate uniformly in the bounding box of the
    /// receiver's regular in-neighbors' states, inflated by `eta`.
    Blend { eta: f64 },
    /// Always emits the configured point.
    FixedTarget { target: DVector<f64> },
    /// Copies the receiver's own state and pushes one seeded coordinate to
    /// the bounding-box maximum plus `offset`.
    CoordinateSpoof { offset: f64 },
}

/// A seeded fabrication strategy owned by one Byzantine agent.
#[derive(Debug, Clone)]
pub struct ByzantineStrategy {
    pub kind: StrategyKind,
    pub seed: u64,
}

impl ByzantineStrategy {
    pub fn new(kind: StrategyKind, seed: u64) -> Self {
        ByzantineStrategy { kind, seed }
    }

    /// Fabricates the payload this strategy's owner sends to `receiver` at
    /// `round`. `with_aux` selects whether the auxiliary channel is
    /// fabricated too (it is for algorithms that carry one).
    pub fn fabricate(
        &self,
        round: usize,
        receiver: usize,
        graph: &Digraph,
        placement: &AdversaryPlacement,
        state: &NetworkState,
        with_aux: bool,
    ) -> Result<Payload> {
        if receiver >= graph.n() {
            return Err(Error::config(format!(
                "receiver {receiver} outside node range"
            )));
        }
        let d = state.dim();
        let mut rng = seed::stream(self.seed, &[purpose::FABRICATE, round as u64, receiver as u64]);

        // States the receiver legitimately sees: its regular in-neighbors.
        let regular_nbrs: Vec<usize> = graph
            .in_neighbors(receiver)
            .iter()
            .copied()
            .filter(|j| !placement.is_byzantine(*j))
            .collect();

        let x = match &self.kind {
            StrategyKind::Blend { eta } => {
                let bbox = bounding_box(&regular_nbrs, receiver, d, |id| &state.x[id]);
                sample_box(&mut rng, &bbox, *eta)
            }
            StrategyKind::FixedTarget { target } => {
                if target.len() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        actual: target.len(),
                    });
                }
                target.clone()
            }
            StrategyKind::CoordinateSpoof { offset } => {
                let bbox = bounding_box(&regular_nbrs, receiver, d, |id| &state.x[id]);
                let mut x = state.x[receiver].clone();
                let coord = rng.random_range(0..d);
                x[coord] = bbox[coord].1 + offset;
                x
            }
        };

        let y = if with_aux {
            let ys = state
                .y
                .as_ref()
                .ok_or_else(|| Error::state("auxiliary channel requested but absent"))?;
            Some(match &self.kind {
                StrategyKind::Blend { eta } => {
                    let bbox = bounding_box(&regular_nbrs, receiver, d, |id| &ys[id]);
                    sample_box(&mut rng, &bbox, *eta)
                }
                StrategyKind::FixedTarget { target } => target.clone(),
                StrategyKind::CoordinateSpoof { offset } => {
                    let bbox = bounding_box(&regular_nbrs, receiver, d, |id| &ys[id]);
                    let mut y = ys[receiver].clone();
                    let coord = rng.random_range(0..d);
                    y[coord] = bbox[coord].1 + offset;
                    y
                }
            })
        } else {
            None
        };

        Ok(Payload { x, y })
    }
}

/// Axis-aligned bounding box of the given agents' vectors; falls back to the
/// receiver's own vector when it has no regular in-neighbors.
fn bounding_box<'a, F>(ids: &[usize], receiver: usize, d: usize, get: F) -> Vec<(f64, f64)>
where
    F: Fn(usize) -> &'a DVector<f64>,
{
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut update = |v: &DVector<f64>| {
        for i in 0..d {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    };
    if ids.is_empty() {
        update(get(receiver));
    } else {
        for &id in ids {
            update(get(id));
        }
    }
    lo.into_iter().zip(hi).collect()
}

fn sample_box(rng: &mut impl Rng, bbox: &[(f64, f64)], eta: f64) -> DVector<f64> {
    DVector::from_fn(bbox.len(), |i, _| {
        let (lo, hi) = bbox[i];
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo) * eta;
        if half <= 0.0 {
            center
        } else {
            rng.random_range(center - half..center + half)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::NetworkState;

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn state_of(xs: Vec<DVector<f64>>) -> NetworkState {
        NetworkState {
            round: 0,
            x: xs,
            y: None,
            outbox: Default::default(),
        }
    }

    #[test]
    fn f_local_validation() {
        let k5 = Digraph::complete(5);
        let p = AdversaryPlacement::new([0, 1].into_iter().collect(), 2);
        assert!(validate_f_local(&k5, &p));
        let p = AdversaryPlacement::new([0, 1].into_iter().collect(), 1);
        assert!(!validate_f_local(&k5, &p));

        let empty = AdversaryPlacement::new(BTreeSet::new(), 1);
        assert!(validate_f_local(&k5, &empty));
    }

    #[test]
    fn f_local_star_hub() {
        // Hub 0 broadcasts to leaves; each leaf sees exactly one adversary.
        let mut g = Digraph::new(4);
        for leaf in 1..4 {
            g.add_edge(0, leaf).unwrap();
        }
        let p = AdversaryPlacement::new([0].into_iter().collect(), 1);
        assert!(validate_f_local(&g, &p));
    }

    #[test]
    fn blend_degenerate_box_emits_common_point() {
        let g = Digraph::complete(3);
        let placement = AdversaryPlacement::new([2].into_iter().collect(), 1);
        let state = state_of(vec![v2(1.5, -2.0), v2(1.5, -2.0), v2(0.0, 0.0)]);
        let strat = ByzantineStrategy::new(StrategyKind::Blend { eta: 1.0 }, 9);
        let payload = strat
            .fabricate(0, 0, &g, &placement, &state, false)
            .unwrap();
        assert_eq!(payload.x, v2(1.5, -2.0));
    }

    #[test]
    fn fixed_target_always_emits_target() {
        let g = Digraph::complete(3);
        let placement = AdversaryPlacement::new([2].into_iter().collect(), 1);
        let state = state_of(vec![v2(0.0, 0.0), v2(1.0, 1.0), v2(9.0, 9.0)]);
        let strat = ByzantineStrategy::new(
            StrategyKind::FixedTarget {
                target: v2(100.0, 100.0),
            },
            3,
        );
        for round in 0..4 {
            for receiver in 0..2 {
                let p = strat
                    .fabricate(round, receiver, &g, &placement, &state, false)
                    .unwrap();
                assert_eq!(p.x, v2(100.0, 100.0));
            }
        }
    }

    #[test]
    fn fabrication_is_deterministic_per_round_receiver() {
        let g = Digraph::complete(4);
        let placement = AdversaryPlacement::new([3].into_iter().collect(), 1);
        let state = state_of(vec![
            v2(0.0, 0.0),
            v2(1.0, 2.0),
            v2(-1.0, 1.0),
            v2(5.0, 5.0),
        ]);
        let strat = ByzantineStrategy::new(StrategyKind::Blend { eta: 1.2 }, 11);
        let a = strat.fabricate(3, 1, &g, &placement, &state, false).unwrap();
        let b = strat.fabricate(3, 1, &g, &placement, &state, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blend_diverges_across_receivers() {
        let g = Digraph::complete(4);
        let placement = AdversaryPlacement::new([3].into_iter().collect(), 1);
        let state = state_of(vec![
            v2(0.0, 0.0),
            v2(1.0, 2.0),
            v2(-1.0, 1.0),
            v2(5.0, 5.0),
        ]);
        let mut differing = 0;
        for s in 0..1000u64 {
            let strat = ByzantineStrategy::new(StrategyKind::Blend { eta: 1.2 }, s);
            let a = strat.fabricate(0, 0, &g, &placement, &state, false).unwrap();
            let b = strat.fabricate(0, 1, &g, &placement, &state, false).unwrap();
            if a != b {
                differing += 1;
            }
        }
        assert!(differing >= 990, "only {differing}/1000 payload pairs differ");
    }

    #[test]
    fn coordinate_spoof_overwrites_one_coordinate() {
        let g = Digraph::complete(3);
        let placement = AdversaryPlacement::new([2].into_iter().collect(), 1);
        let state = state_of(vec![v2(0.0, 0.0), v2(1.0, 1.0), v2(0.5, 0.5)]);
        let strat = ByzantineStrategy::new(StrategyKind::CoordinateSpoof { offset: 5.0 }, 4);
        let p = strat.fabricate(0, 0, &g, &placement, &state, false).unwrap();
        // Exactly one coordinate equals box max + offset, the other is the
        // receiver's own value.
        let spoofed: Vec<usize> = (0..2).filter(|&i| p.x[i] == 1.0 + 5.0).collect();
        assert_eq!(spoofed.len(), 1);
        let other = 1 - spoofed[0];
        assert_eq!(p.x[other], state.x[0][other]);
    }
}
