//! Independent oracles used by the integration and acceptance suites. These
//! deliberately avoid the library's own geometry paths: the enclosing-ball
//! oracle enumerates boundary subsets directly, and hull distances come from
//! explicit polygon/interval geometry.

#![allow(dead_code)]

use nalgebra::DVector;

/// Solves a small dense linear system by Gaussian elimination with partial
/// pivoting. Returns `None` on (near-)singularity.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Center equidistant from all given points within their affine hull.
fn circumcenter(points: &[&DVector<f64>]) -> Option<DVector<f64>> {
    let m = points.len() - 1;
    let base = points[0];
    let offsets: Vec<DVector<f64>> = points[1..].iter().map(|p| *p - base).collect();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = 2.0 * offsets[i].dot(&offsets[j]);
        }
        b[i] = offsets[i].norm_squared();
    }
    let mu = solve_dense(a, b)?;
    let mut center = base.clone();
    for (i, offset) in offsets.iter().enumerate() {
        center += offset * mu[i];
    }
    Some(center)
}

/// Minimum enclosing ball by exhaustive enumeration of boundary-defining
/// subsets (singletons, pairs, and up to `d + 1`-point circumspheres).
pub fn brute_force_meb(points: &[DVector<f64>]) -> (DVector<f64>, f64) {
    assert!(!points.is_empty());
    let d = points[0].len();
    let covers = |center: &DVector<f64>, radius: f64| {
        points.iter().all(|p| (p - center).norm() <= radius + 1e-9)
    };
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut consider = |center: DVector<f64>, radius: f64| {
        if covers(&center, radius) {
            let better = best.as_ref().map(|(_, r)| radius < *r).unwrap_or(true);
            if better {
                best = Some((center, radius));
            }
        }
    };

    for p in points {
        consider(p.clone(), 0.0);
    }
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let center = (p + q) * 0.5;
            let radius = (p - &center).norm();
            consider(center, radius);
        }
    }
    let n = points.len();
    if d >= 2 {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    if let Some(c) = circumcenter(&[&points[i], &points[j], &points[k]]) {
                        let r = (&points[i] - &c).norm();
                        consider(c, r);
                    }
                }
            }
        }
    }
    if d >= 3 {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    for l in k + 1..n {
                        if let Some(c) =
                            circumcenter(&[&points[i], &points[j], &points[k], &points[l]])
                        {
                            let r = (&points[i] - &c).norm();
                            consider(c, r);
                        }
                    }
                }
            }
        }
    }
    best.expect("some candidate ball covers the points")
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull (monotone chain), counterclockwise, no repeated endpoint.
fn convex_hull_2d(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let ap = (p.0 - a.0, p.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap.0 * ab.0 + ap.1 * ab.1) / len2).clamp(0.0, 1.0)
    };
    let q = (a.0 + t * ab.0, a.1 + t * ab.1);
    ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
}

/// Euclidean distance from `p` to the convex hull of `points` (2D).
pub fn hull_distance_2d(points: &[(f64, f64)], p: (f64, f64)) -> f64 {
    let hull = convex_hull_2d(points);
    match hull.len() {
        0 => f64::INFINITY,
        1 => segment_distance(hull[0], hull[0], p),
        2 => segment_distance(hull[0], hull[1], p),
        _ => {
            let inside = (0..hull.len()).all(|i| {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                cross(a, b, p) >= -1e-12
            });
            if inside {
                0.0
            } else {
                (0..hull.len())
                    .map(|i| segment_distance(hull[i], hull[(i + 1) % hull.len()], p))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Distance from `p` to the interval hull of scalar values.
pub fn hull_distance_1d(values: &[f64], p: f64) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo - p).max(p - hi).max(0.0)
}

/// Distance from a point to the convex hull of `points` for d in {1, 2}.
pub fn hull_distance(points: &[DVector<f64>], p: &DVector<f64>) -> f64 {
    match p.len() {
        1 => hull_distance_1d(&points.iter().map(|v| v[0]).collect::<Vec<_>>(), p[0]),
        2 => hull_distance_2d(
            &points.iter().map(|v| (v[0], v[1])).collect::<Vec<_>>(),
            (p[0], p[1]),
        ),
        other => panic!("hull distance oracle supports d <= 2, got {other}"),
    }
}
