//! Dense two-phase simplex for the small exact-feasibility problems in the
//! aggregation filters: convex-hull membership (with Farkas separators on
//! failure) and max-margin point location inside a halfspace intersection.

use nalgebra::{DMatrix, DVector};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    /// Farkas certificate `y`: `y' A <= 0` componentwise and `y' b > 0`.
    Infeasible { farkas: Vec<f64> },
    Unbounded,
    IterationLimit,
}

/// Minimizes `c' x` subject to `A x = b`, `x >= 0` (dense tableau simplex,
/// Bland's rule).
pub fn solve_lp(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> LpOutcome {
    let m = a.nrows();
    let n = a.ncols();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);

    // Normalize to b >= 0, remembering the row signs for the Farkas vector.
    let mut signs = vec![1.0f64; m];
    let total = n + m; // original vars + artificials
    let mut tab = DMatrix::<f64>::zeros(m + 1, total + 1);
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        signs[i] = s;
        for j in 0..n {
            tab[(i, j)] = s * a[(i, j)];
        }
        tab[(i, n + i)] = 1.0;
        tab[(i, total)] = s * b[i];
    }

    let mut basis: Vec<usize> = (n..total).collect();

    // Phase I objective: minimize the artificial sum. Reduced costs for the
    // artificial basis are c_j - column sums.
    for j in 0..total {
        let mut col_sum = 0.0;
        for i in 0..m {
            col_sum += tab[(i, j)];
        }
        let c_j = if j >= n { 1.0 } else { 0.0 };
        tab[(m, j)] = c_j - col_sum;
    }
    let rhs_sum: f64 = (0..m).map(|i| tab[(i, total)]).sum();
    tab[(m, total)] = -rhs_sum;

    match run_simplex(&mut tab, &mut basis, total, total) {
        SimplexStatus::Ok => {}
        SimplexStatus::Unbounded => return LpOutcome::Unbounded,
        SimplexStatus::IterationLimit => return LpOutcome::IterationLimit,
    }

    let phase1_obj = -tab[(m, total)];
    if phase1_obj > FEAS_TOL {
        // Infeasible: recover duals from the artificial columns' reduced
        // costs (y_i = 1 - r_{artificial i}) and undo the row flips.
        let farkas = (0..m)
            .map(|i| signs[i] * (1.0 - tab[(m, n + i)]))
            .collect();
        return LpOutcome::Infeasible { farkas };
    }

    // Phase II: original objective; artificials may no longer enter.
    for j in 0..=total {
        tab[(m, j)] = 0.0;
    }
    for j in 0..n {
        tab[(m, j)] = c[j];
    }
    // Subtract basic-variable rows to restore reduced-cost form.
    for i in 0..m {
        let cb = if basis[i] < n { c[basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..=total {
                tab[(m, j)] -= cb * tab[(i, j)];
            }
        }
    }

    match run_simplex(&mut tab, &mut basis, total, n) {
        SimplexStatus::Ok => {}
        SimplexStatus::Unbounded => return LpOutcome::Unbounded,
        SimplexStatus::IterationLimit => return LpOutcome::IterationLimit,
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = tab[(i, total)];
        }
    }
    LpOutcome::Optimal {
        x,
        objective: -tab[(m, total)],
    }
}

enum SimplexStatus {
    Ok,
    Unbounded,
    IterationLimit,
}

/// Pivots until no reduced cost among the first `enter_limit` columns is
/// negative. Bland's rule on entering and leaving choices prevents cycling.
fn run_simplex(
    tab: &mut DMatrix<f64>,
    basis: &mut [usize],
    total: usize,
    enter_limit: usize,
) -> SimplexStatus {
    let m = tab.nrows() - 1;
    for _ in 0..MAX_PIVOTS {
        let mut entering = None;
        for j in 0..enter_limit {
            if tab[(m, j)] < -PIVOT_EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(enter) = entering else {
            return SimplexStatus::Ok;
        };

        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let coeff = tab[(i, enter)];
            if coeff > PIVOT_EPS {
                let ratio = tab[(i, total)] / coeff;
                let better = ratio < best_ratio - PIVOT_EPS
                    || ((ratio - best_ratio).abs() <= PIVOT_EPS
                        && leave.map(|l| basis[i] < basis[l]).unwrap_or(true));
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return SimplexStatus::Unbounded;
        };

        pivot(tab, leave, enter);
        basis[leave] = enter;
    }
    SimplexStatus::IterationLimit
}

fn pivot(tab: &mut DMatrix<f64>, row: usize, col: usize) {
    let rows = tab.nrows();
    let cols = tab.ncols();
    let p = tab[(row, col)];
    for j in 0..cols {
        tab[(row, j)] /= p;
    }
    for i in 0..rows {
        if i != row {
            let factor = tab[(i, col)];
            if factor != 0.0 {
                for j in 0..cols {
                    tab[(i, j)] -= factor * tab[(row, j)];
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum HullMembership {
    /// Convex weights reproducing the target.
    Inside { weights: Vec<f64> },
    /// Hyperplane `a' z + offset <= 0` on all points, `> 0` at the target.
    Outside { normal: DVector<f64>, offset: f64 },
    Degenerate,
}

/// Exact membership of `target` in the convex hull of `points`, via Phase-I
/// feasibility of `sum w_j p_j = target`, `sum w_j = 1`, `w >= 0`.
pub fn convex_hull_membership(points: &[&DVector<f64>], target: &DVector<f64>) -> HullMembership {
    let d = target.len();
    let n = points.len();
    let mut a = DMatrix::zeros(d + 1, n);
    for (j, p) in points.iter().enumerate() {
        for i in 0..d {
            a[(i, j)] = p[i];
        }
        a[(d, j)] = 1.0;
    }
    let mut b = DVector::zeros(d + 1);
    for i in 0..d {
        b[i] = target[i];
    }
    b[d] = 1.0;
    let c = DVector::zeros(n);

    match solve_lp(&a, &b, &c) {
        LpOutcome::Optimal { x, .. } => HullMembership::Inside { weights: x },
        LpOutcome::Infeasible { farkas } => {
            let normal = DVector::from_fn(d, |i, _| farkas[i]);
            let offset = farkas[d];
            HullMembership::Outside { normal, offset }
        }
        _ => HullMembership::Degenerate,
    }
}

/// Point of the box `[lo, hi]` maximizing the minimum slack over the
/// halfspaces `normal' p + offset <= 0` (normals need not be unit; slack is
/// measured in normalized units). Returns the point and achieved margin.
pub fn max_margin_point(
    halfspaces: &[(DVector<f64>, f64)],
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let d = lo.len();
    let h = halfspaces.len();
    let t_max = (hi - lo).amax().max(1.0);

    // Variables: u (d), t, slack per halfspace (h), slack per box bound (d),
    // slack for the t cap.
    let n = d + 1 + h + d + 1;
    let m = h + d + 1;
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);

    for (row, (normal, offset)) in halfspaces.iter().enumerate() {
        let norm = normal.norm();
        if norm <= PIVOT_EPS {
            return None;
        }
        for j in 0..d {
            a[(row, j)] = normal[j] / norm;
        }
        a[(row, d)] = 1.0; // + t (normalized slack)
        a[(row, d + 1 + row)] = 1.0;
        b[row] = -(normal.dot(lo) + offset) / norm;
    }
    for j in 0..d {
        let row = h + j;
        a[(row, j)] = 1.0;
        a[(row, d + 1 + h + j)] = 1.0;
        b[row] = hi[j] - lo[j];
    }
    let cap_row = h + d;
    a[(cap_row, d)] = 1.0;
    a[(cap_row, d + 1 + h + d)] = 1.0;
    b[cap_row] = t_max;

    let mut c = DVector::zeros(n);
    c[d] = -1.0; // maximize t

    match solve_lp(&a, &b, &c) {
        LpOutcome::Optimal { x, .. } => {
            let p = DVector::from_fn(d, |i, _| lo[i] + x[i]);
            Some((p, x[d]))
        }
        _ => None,
    }
}
