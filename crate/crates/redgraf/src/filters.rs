//! The per-round aggregation and filtering operations: distance filtering,
//! coordinate-wise and full min-max trimming, weighted averaging, and the
//! resilient safe-point computation.
//!
//! All operations are pure functions over an immutable [`NeighborhoodView`];
//! the candidate pool is always the set of in-neighbors plus the agent
//! itself, and the agent survives every filter.

use std::collections::BTreeSet;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lp::{convex_hull_membership, max_margin_point, HullMembership};

/// Which state channel a coordinate-wise operation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Main,
    Aux,
}

/// One received state (possibly fabricated by a Byzantine sender).
#[derive(Debug, Clone)]
pub struct ReceivedState {
    pub sender: usize,
    pub x: DVector<f64>,
    pub y: Option<DVector<f64>>,
}

/// Everything one agent sees in one round: its own state plus the received
/// neighborhood multiset.
#[derive(Debug, Clone)]
pub struct NeighborhoodView {
    pub self_id: usize,
    pub self_x: DVector<f64>,
    pub self_y: Option<DVector<f64>>,
    pub received: Vec<ReceivedState>,
}

impl NeighborhoodView {
    pub fn new(
        self_id: usize,
        self_x: DVector<f64>,
        self_y: Option<DVector<f64>>,
        received: Vec<ReceivedState>,
    ) -> Result<Self> {
        let d = self_x.len();
        let mut seen = BTreeSet::new();
        seen.insert(self_id);
        for r in &received {
            if !seen.insert(r.sender) {
                return Err(Error::state(format!("duplicate sender {}", r.sender)));
            }
            if r.x.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: r.x.len(),
                });
            }
            if let Some(y) = &r.y {
                if y.len() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        actual: y.len(),
                    });
                }
            }
        }
        if let Some(y) = &self_y {
            if y.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: y.len(),
                });
            }
        }
        Ok(NeighborhoodView {
            self_id,
            self_x,
            self_y,
            received,
        })
    }

    pub fn dim(&self) -> usize {
        self.self_x.len()
    }

    /// All candidate ids: in-neighbors plus self.
    pub fn candidate_ids(&self) -> BTreeSet<usize> {
        let mut ids: BTreeSet<usize> = self.received.iter().map(|r| r.sender).collect();
        ids.insert(self.self_id);
        ids
    }

    fn x_of(&self, id: usize) -> &DVector<f64> {
        if id == self.self_id {
            &self.self_x
        } else {
            &self
                .received
                .iter()
                .find(|r| r.sender == id)
                .expect("candidate id not in view")
                .x
        }
    }

    fn y_of(&self, id: usize) -> Result<&DVector<f64>> {
        let y = if id == self.self_id {
            self.self_y.as_ref()
        } else {
            self.received
                .iter()
                .find(|r| r.sender == id)
                .expect("candidate id not in view")
                .y
                .as_ref()
        };
        y.ok_or_else(|| Error::state(format!("candidate {id} carries no auxiliary state")))
    }

    fn field_of(&self, id: usize, field: Field) -> Result<&DVector<f64>> {
        match field {
            Field::Main => Ok(self.x_of(id)),
            Field::Aux => self.y_of(id),
        }
    }
}

/// Uniform convex weights over kept sets with the positive floor carried for
/// auditing (`1/N` under the uniform policy).
#[derive(Debug, Clone, Copy)]
pub struct WeightPolicy {
    pub floor: f64,
}

impl WeightPolicy {
    pub fn uniform(total_agents: usize) -> Self {
        WeightPolicy {
            floor: 1.0 / total_agents.max(1) as f64,
        }
    }
}

/// `k`-th largest element of `values` (1-indexed).
fn kth_largest(values: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= values.len());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted[k - 1]
}

/// `k`-th smallest element of `values` (1-indexed).
fn kth_smallest(values: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= values.len());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[k - 1]
}

/// Distance filter: drops up to `f` candidates whose distance to the agent's
/// auxiliary point strictly exceeds both the `(f+1)`-th largest distance and
/// the agent's own distance. Ties at the threshold survive, so at most `f`
/// candidates are removed and the agent always survives.
pub fn dist_filt(view: &NeighborhoodView, f: usize) -> Result<BTreeSet<usize>> {
    let y = view
        .self_y
        .as_ref()
        .ok_or_else(|| Error::state("distance filter requires an auxiliary point"))?;
    let ids = view.candidate_ids();
    if ids.len() < f + 1 {
        return Err(Error::config(format!(
            "distance filter needs at least {} candidates, got {}",
            f + 1,
            ids.len()
        )));
    }
    let distances: Vec<(usize, f64)> = ids
        .iter()
        .map(|&id| (id, (view.x_of(id) - y).norm()))
        .collect();
    let all: Vec<f64> = distances.iter().map(|(_, d)| *d).collect();
    let threshold = kth_largest(&all, f + 1).max((view.self_x.clone() - y).norm());
    Ok(distances
        .into_iter()
        .filter(|(_, d)| *d <= threshold)
        .map(|(id, _)| id)
        .collect())
}

/// Coordinate-wise min-max filter over `candidates`: per dimension, drops up
/// to `f` values strictly above max(`(f+1)`-th largest, own value) and up to
/// `f` strictly below min(`(f+1)`-th smallest, own value).
pub fn cw_mm_filt(
    view: &NeighborhoodView,
    candidates: &BTreeSet<usize>,
    f: usize,
    field: Field,
) -> Result<Vec<BTreeSet<usize>>> {
    if !candidates.contains(&view.self_id) {
        return Err(Error::state("candidate set must contain the agent itself"));
    }
    if candidates.len() < 2 * f + 1 {
        return Err(Error::config(format!(
            "min-max filter needs at least {} candidates, got {}",
            2 * f + 1,
            candidates.len()
        )));
    }
    let d = view.dim();
    let self_v = view.field_of(view.self_id, field)?.clone();
    let mut kept = Vec::with_capacity(d);
    for dim in 0..d {
        let values: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&id| Ok((id, view.field_of(id, field)?[dim])))
            .collect::<Result<_>>()?;
        let raw: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
        let hi = kth_largest(&raw, f + 1).max(self_v[dim]);
        let lo = kth_smallest(&raw, f + 1).min(self_v[dim]);
        kept.push(
            values
                .into_iter()
                .filter(|(_, v)| *v >= lo && *v <= hi)
                .map(|(id, _)| id)
                .collect(),
        );
    }
    Ok(kept)
}

/// Full min-max filter: a candidate survives iff it is within bounds in every
/// dimension (intersection of the coordinate-wise kept sets on the main
/// channel). Removes at most `2 d f` candidates.
pub fn full_mm_filt(
    view: &NeighborhoodView,
    candidates: &BTreeSet<usize>,
    f: usize,
) -> Result<BTreeSet<usize>> {
    let per_dim = cw_mm_filt(view, candidates, f, Field::Main)?;
    let mut kept = candidates.clone();
    for dim_kept in &per_dim {
        kept = kept.intersection(dim_kept).copied().collect();
    }
    Ok(kept)
}

/// Uniform convex combination of the kept main states.
pub fn full_average(
    view: &NeighborhoodView,
    kept: &BTreeSet<usize>,
    policy: &WeightPolicy,
) -> Result<DVector<f64>> {
    if kept.is_empty() {
        return Err(Error::state("weighted average over an empty kept set"));
    }
    if !kept.contains(&view.self_id) {
        return Err(Error::state("kept set must contain the agent itself"));
    }
    let w = 1.0 / kept.len() as f64;
    debug_assert!(w + 1e-12 >= policy.floor);
    let _ = policy;
    let mut acc = DVector::zeros(view.dim());
    for &id in kept {
        acc += view.x_of(id);
    }
    Ok(acc / kept.len() as f64)
}

/// Per-dimension uniform averages over the per-dimension kept sets.
pub fn cw_average(
    view: &NeighborhoodView,
    kept_per_dim: &[BTreeSet<usize>],
    policy: &WeightPolicy,
    field: Field,
) -> Result<DVector<f64>> {
    let d = view.dim();
    if kept_per_dim.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: kept_per_dim.len(),
        });
    }
    let mut out = DVector::zeros(d);
    for (dim, kept) in kept_per_dim.iter().enumerate() {
        if kept.is_empty() {
            return Err(Error::state(format!(
                "empty kept set in dimension {dim}"
            )));
        }
        if !kept.contains(&view.self_id) {
            return Err(Error::state("kept set must contain the agent itself"));
        }
        let w = 1.0 / kept.len() as f64;
        debug_assert!(w + 1e-12 >= policy.floor);
        let _ = w;
        let mut acc = 0.0;
        for &id in kept {
            acc += view.field_of(id, field)?[dim];
        }
        out[dim] = acc / kept.len() as f64;
    }
    let _ = policy;
    Ok(out)
}

/// Runtime guards for the combinatorial safe-point solve.
#[derive(Debug, Clone, Copy)]
pub struct SafePointLimits {
    pub max_candidates: usize,
    pub max_f: usize,
    pub max_refinements: usize,
}

impl Default for SafePointLimits {
    fn default() -> Self {
        SafePointLimits {
            max_candidates: 25,
            max_f: 3,
            max_refinements: 200,
        }
    }
}

/// A point in the intersection of the convex hulls of every
/// `(n - f)`-subset of candidate main states, found by exact linear
/// feasibility on the subset hulls.
///
/// The solve alternates exact hull-membership checks (Phase-I feasibility for
/// the subset's convex weights) with relocation of the candidate point: each
/// failed subset yields a Farkas separating hyperplane, and the point is
/// re-placed at the maximum-margin location satisfying all separators so
/// far. With at most `f` Byzantine candidates the result is a convex
/// combination of regular candidates' states.
pub fn safe_point(
    view: &NeighborhoodView,
    f: usize,
    limits: &SafePointLimits,
) -> Result<DVector<f64>> {
    let ids: Vec<usize> = view.candidate_ids().into_iter().collect();
    let n = ids.len();
    let d = view.dim();
    if n < (d + 1) * f + 1 {
        return Err(Error::config(format!(
            "safe point needs at least (d+1)F+1 = {} candidates, got {n}",
            (d + 1) * f + 1
        )));
    }
    if n > limits.max_candidates || f > limits.max_f {
        return Err(Error::config(format!(
            "safe point limited to {} candidates / F <= {} (got n = {n}, F = {f})",
            limits.max_candidates, limits.max_f
        )));
    }
    let points: Vec<&DVector<f64>> = ids.iter().map(|&id| view.x_of(id)).collect();

    if f == 0 {
        let mut mean = DVector::zeros(d);
        for p in &points {
            mean += *p;
        }
        return Ok(mean / n as f64);
    }

    if points.iter().all(|p| *p == points[0]) {
        return Ok(points[0].clone());
    }

    if d == 1 {
        // The intersection of all (n-f)-subset hulls is the interval between
        // the (f+1)-th smallest and (f+1)-th largest values.
        let values: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let lo = kth_smallest(&values, f + 1);
        let hi = kth_largest(&values, f + 1);
        debug_assert!(lo <= hi);
        return Ok(DVector::from_vec(vec![0.5 * (lo + hi)]));
    }

    let keep = n - f;
    let subsets = combinations(n, keep);

    // Start from the coordinate-wise trimmed mean; it already sits inside
    // most subset hulls.
    let mut p = trimmed_mean(&points, f, d);
    let (lo, hi) = bounding_box(&points, d);

    let mut cuts: Vec<(DVector<f64>, f64)> = Vec::new();
    for _ in 0..limits.max_refinements {
        let mut violated = None;
        for subset in &subsets {
            let subset_points: Vec<&DVector<f64>> =
                subset.iter().map(|&i| points[i]).collect();
            match convex_hull_membership(&subset_points, &p) {
                HullMembership::Inside { .. } => {}
                HullMembership::Outside { normal, offset } => {
                    violated = Some((normal, offset));
                    break;
                }
                HullMembership::Degenerate => {
                    return Err(Error::Numerical {
                        context: "subset membership solve stalled".into(),
                        residual: f64::NAN,
                    });
                }
            }
        }
        match violated {
            None => return Ok(p),
            Some(cut) => {
                cuts.push(cut);
                match max_margin_point(&cuts, &lo, &hi) {
                    Some((next, _margin)) => p = next,
                    None => {
                        return Err(Error::Numerical {
                            context: "safe-point feasibility system has no solution".into(),
                            residual: max_cut_violation(&cuts, &p),
                        })
                    }
                }
            }
        }
    }
    Err(Error::Numerical {
        context: "safe-point refinement did not settle".into(),
        residual: max_cut_violation(&cuts, &p),
    })
}

fn max_cut_violation(cuts: &[(DVector<f64>, f64)], p: &DVector<f64>) -> f64 {
    cuts.iter()
        .map(|(a, b)| (a.dot(p) + b) / a.norm().max(1e-300))
        .fold(0.0, f64::max)
}

fn trimmed_mean(points: &[&DVector<f64>], f: usize, d: usize) -> DVector<f64> {
    let n = points.len();
    let mut out = DVector::zeros(d);
    for dim in 0..d {
        let mut values: Vec<f64> = points.iter().map(|p| p[dim]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let kept = &values[f..n - f];
        out[dim] = kept.iter().sum::<f64>() / kept.len() as f64;
    }
    out
}

fn bounding_box(points: &[&DVector<f64>], d: usize) -> (DVector<f64>, DVector<f64>) {
    let mut lo = DVector::from_element(d, f64::INFINITY);
    let mut hi = DVector::from_element(d, f64::NEG_INFINITY);
    for p in points {
        for i in 0..d {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return if k == 0 { vec![vec![]] } else { out };
    }
    loop {
        out.push(current.clone());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] != i + n - k {
                break;
            }
        }
        if current[i] == i + n - k {
            return out;
        }
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}
