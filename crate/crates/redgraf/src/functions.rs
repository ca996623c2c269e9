//! Local cost functions, their moduli, the global objective and its
//! minimizer, and the enclosing ball of the local minimizers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{self, purpose};

/// Iteration cap for the generic gradient-descent minimizer.
const GENERIC_MAX_ITERS: usize = 2_000_000;
/// Gradient tolerance for the generic minimizer path.
const GENERIC_GRAD_TOL: f64 = 1e-10;

/// A strongly convex differentiable local objective.
///
/// `strong_convexity` and `gradient_lipschitz` are the moduli of the standard
/// lower/upper quadratic envelopes; `minimizer` returns the exact minimizer
/// when the function admits a closed form.
pub trait CostFunction: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;

    fn eval(&self, x: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Strong-convexity modulus `mu > 0`.
    fn strong_convexity(&self) -> f64;

    /// Gradient Lipschitz modulus `L >= mu`.
    fn gradient_lipschitz(&self) -> f64;

    /// Closed-form minimizer, when available.
    fn minimizer(&self) -> Option<DVector<f64>> {
        None
    }

    /// Quadratic view of the cost, when it is one. Enables the exact linear
    /// solve for the global minimizer.
    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        None
    }
}

/// Evaluates a cost function and its gradient at `x`.
pub fn eval_and_grad(f: &dyn CostFunction, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    Ok((f.eval(x)?, f.gradient(x)?))
}

/// `f(x) = 1/2 (x - m)^T Q (x - m) + b` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    center: DVector<f64>,
    curvature: DMatrix<f64>,
    offset: f64,
    mu: f64,
    lipschitz: f64,
}

impl QuadraticCost {
    pub fn new(center: DVector<f64>, curvature: DMatrix<f64>, offset: f64) -> Result<Self> {
        let d = center.len();
        if curvature.nrows() != d || curvature.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: curvature.nrows(),
            });
        }
        let scale = curvature.amax().max(1.0);
        let asym = (&curvature - curvature.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::config(format!(
                "curvature matrix is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        let eigen = curvature.clone().symmetric_eigen();
        let mu = eigen.eigenvalues.min();
        let lipschitz = eigen.eigenvalues.max();
        if mu <= 0.0 {
            return Err(Error::config(format!(
                "curvature matrix is not positive definite (min eigenvalue {mu:.3e})"
            )));
        }
        Ok(Self {
            center,
            curvature,
            offset,
            mu,
            lipschitz,
        })
    }

    /// Isotropic quadratic `1/2 s ||x - m||^2 + b`.
    pub fn isotropic(center: DVector<f64>, scale: f64, offset: f64) -> Result<Self> {
        let d = center.len();
        Self::new(center, DMatrix::identity(d, d) * scale, offset)
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.center.len() {
            return Err(Error::Dimension {
                expected: self.center.len(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

impl CostFunction for QuadraticCost {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let delta = x - &self.center;
        Ok(0.5 * delta.dot(&(&self.curvature * &delta)) + self.offset)
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.curvature * (x - &self.center))
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }

    fn gradient_lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        Some(self.center.clone())
    }

    fn as_quadratic(&self) -> Option<&QuadraticCost> {
        Some(self)
    }
}

/// The regular agents' cost functions, keyed by agent id, with the derived
/// moduli `mu_tilde = min_i mu_i` and `l_tilde = max_i L_i`.
#[derive(Debug, Clone)]
pub struct CostEnsemble {
    costs: BTreeMap<usize, Arc<dyn CostFunction>>,
    dim: usize,
    mu_tilde: f64,
    l_tilde: f64,
}

impl CostEnsemble {
    pub fn new(costs: BTreeMap<usize, Arc<dyn CostFunction>>) -> Result<Self> {
        let mut iter = costs.values();
        let first = iter.next().ok_or(Error::EmptyInput("cost ensemble"))?;
        let dim = first.dim();
        for c in costs.values() {
            if c.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: c.dim(),
                });
            }
        }
        let mu_tilde = costs
            .values()
            .map(|c| c.strong_convexity())
            .fold(f64::INFINITY, f64::min);
        let l_tilde = costs
            .values()
            .map(|c| c.gradient_lipschitz())
            .fold(0.0, f64::max);
        if !(mu_tilde > 0.0 && l_tilde >= mu_tilde) {
            return Err(Error::config(format!(
                "ensemble moduli are inconsistent (mu_tilde {mu_tilde:.3e}, l_tilde {l_tilde:.3e})"
            )));
        }
        Ok(Self {
            costs,
            dim,
            mu_tilde,
            l_tilde,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.costs.keys().copied()
    }

    pub fn cost(&self, agent: usize) -> Option<&Arc<dyn CostFunction>> {
        self.costs.get(&agent)
    }

    pub fn costs(&self) -> impl Iterator<Item = (usize, &Arc<dyn CostFunction>)> {
        self.costs.iter().map(|(id, c)| (*id, c))
    }

    pub fn mu_tilde(&self) -> f64 {
        self.mu_tilde
    }

    pub fn l_tilde(&self) -> f64 {
        self.l_tilde
    }

    pub fn kappa(&self) -> f64 {
        self.l_tilde / self.mu_tilde
    }

    /// Average objective `f(x) = 1/|R| sum_i f_i(x)`.
    pub fn average_value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for c in self.costs.values() {
            total += c.eval(x)?;
        }
        Ok(total / self.costs.len() as f64)
    }

    /// Gradient of the average objective.
    pub fn average_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut total = DVector::zeros(self.dim);
        for c in self.costs.values() {
            total += c.gradient(x)?;
        }
        Ok(total / self.costs.len() as f64)
    }
}

/// Global minimizer of the averaged objective together with the enclosing
/// ball of the local minimizers.
#[derive(Debug, Clone)]
pub struct MinimizerGeometry {
    pub x_star: DVector<f64>,
    pub c_star: DVector<f64>,
    pub r_star: f64,
    pub f_star: f64,
    /// Achieved gradient tolerance of the local-minimizer computation
    /// (exactly zero on the closed-form path).
    pub epsilon_star: f64,
    /// Whether `(c_star, r_star)` is the exact minimum enclosing ball.
    pub minimal_ball: bool,
}

/// Computes the minimizer of the averaged objective.
///
/// Quadratic ensembles are solved exactly via `(sum Q_i) x = sum Q_i m_i`;
/// anything else falls back to gradient descent with step `1/l_tilde` until
/// the gradient norm drops below `1e-10`.
pub fn global_minimizer(ensemble: &CostEnsemble) -> Result<MinimizerGeometry> {
    let quadratics: Option<Vec<&QuadraticCost>> = ensemble
        .costs
        .values()
        .map(|c| c.as_quadratic())
        .collect();

    let (x_star, epsilon_star) = match &quadratics {
        Some(qs) => {
            let d = ensemble.dim();
            let mut q_sum = DMatrix::zeros(d, d);
            let mut rhs = DVector::zeros(d);
            for q in qs {
                q_sum += q.curvature();
                rhs += q.curvature() * q.center();
            }
            let x = q_sum
                .clone()
                .cholesky()
                .map(|ch| ch.solve(&rhs))
                .or_else(|| q_sum.lu().solve(&rhs))
                .ok_or_else(|| Error::Numerical {
                    context: "summed curvature matrix is singular".into(),
                    residual: f64::NAN,
                })?;
            (x, 0.0)
        }
        None => {
            let start = DVector::zeros(ensemble.dim());
            let x = descend(
                ensemble.dim(),
                |x| ensemble.average_gradient(x),
                ensemble.l_tilde(),
                start,
            )?;
            (x, GENERIC_GRAD_TOL)
        }
    };

    let mut minimizers = Vec::with_capacity(ensemble.len());
    for c in ensemble.costs.values() {
        match c.minimizer() {
            Some(m) => minimizers.push(m),
            None => {
                let start = DVector::zeros(c.dim());
                minimizers.push(descend(
                    c.dim(),
                    |x| c.gradient(x),
                    c.gradient_lipschitz(),
                    start,
                )?);
            }
        }
    }
    let ball = enclosing_ball(&minimizers)?;
    let f_star = ensemble.average_value(&x_star)?;

    Ok(MinimizerGeometry {
        x_star,
        c_star: ball.center,
        r_star: ball.radius,
        f_star,
        epsilon_star,
        minimal_ball: ball.minimal,
    })
}

fn descend<G>(dim: usize, grad: G, lipschitz: f64, mut x: DVector<f64>) -> Result<DVector<f64>>
where
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    debug_assert!(dim == x.len());
    let step = 1.0 / lipschitz;
    let mut g = grad(&x)?;
    for _ in 0..GENERIC_MAX_ITERS {
        if g.norm() < GENERIC_GRAD_TOL {
            return Ok(x);
        }
        x -= &g * step;
        g = grad(&x)?;
    }
    Err(Error::Convergence {
        iterations: GENERIC_MAX_ITERS,
        gradient_norm: g.norm(),
    })
}

/// A ball returned by [`enclosing_ball`].
#[derive(Debug, Clone)]
pub struct EnclosingBall {
    pub center: DVector<f64>,
    pub radius: f64,
    /// True when the ball is the exact minimum enclosing ball (`d <= 3`).
    pub minimal: bool,
}

impl EnclosingBall {
    fn empty(dim: usize) -> Self {
        EnclosingBall {
            center: DVector::zeros(dim),
            radius: -1.0,
            minimal: true,
        }
    }

    fn contains(&self, p: &DVector<f64>) -> bool {
        if self.radius < 0.0 {
            return false;
        }
        (p - &self.center).norm() <= self.radius + 1e-10 * (1.0 + self.radius)
    }
}

/// Smallest ball containing all points, exact for dimension `<= 3`
/// (recursive boundary construction). Higher dimensions fall back to the
/// centroid center with `radius = max distance`, flagged non-minimal.
pub fn enclosing_ball(points: &[DVector<f64>]) -> Result<EnclosingBall> {
    let first = points.first().ok_or(Error::EmptyInput("point list"))?;
    let d = first.len();
    for p in points {
        if p.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: p.len(),
            });
        }
    }

    if d > 3 {
        let mut center = DVector::zeros(d);
        for p in points {
            center += p;
        }
        center /= points.len() as f64;
        let radius = points
            .iter()
            .map(|p| (p - &center).norm())
            .fold(0.0, f64::max);
        return Ok(EnclosingBall {
            center,
            radius,
            minimal: false,
        });
    }

    // Identical points collapse to one representative; the recursion only
    // needs distinct candidates on the boundary.
    let mut distinct: Vec<&DVector<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !distinct.iter().any(|q| *q == p) {
            distinct.push(p);
        }
    }

    let mut boundary = Vec::new();
    let ball = welzl(&distinct, &mut boundary, d);
    if ball.radius < 0.0 {
        return Err(Error::Numerical {
            context: "enclosing ball construction failed".into(),
            residual: f64::NAN,
        });
    }
    Ok(ball)
}

fn welzl(points: &[&DVector<f64>], boundary: &mut Vec<DVector<f64>>, d: usize) -> EnclosingBall {
    if points.is_empty() || boundary.len() == d + 1 {
        return ball_from_boundary(boundary, d);
    }
    let (rest, last) = points.split_at(points.len() - 1);
    let ball = welzl(rest, boundary, d);
    let p = last[0];
    if ball.contains(p) {
        return ball;
    }
    boundary.push(p.clone());
    let ball = welzl(rest, boundary, d);
    boundary.pop();
    ball
}

/// Smallest ball with every boundary point on its surface; falls back to
/// proper subsets when the boundary set is affinely degenerate.
fn ball_from_boundary(boundary: &[DVector<f64>], d: usize) -> EnclosingBall {
    match boundary.len() {
        0 => EnclosingBall::empty(d),
        1 => EnclosingBall {
            center: boundary[0].clone(),
            radius: 0.0,
            minimal: true,
        },
        _ => {
            if let Some(ball) = circumball(boundary) {
                if boundary.iter().all(|p| ball.contains(p)) {
                    return ball;
                }
            }
            // Degenerate boundary (e.g. collinear): the minimum ball is
            // carried by a proper subset.
            let mut best: Option<EnclosingBall> = None;
            for skip in 0..boundary.len() {
                let subset: Vec<DVector<f64>> = boundary
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != skip)
                    .map(|(_, p)| p.clone())
                    .collect();
                let ball = ball_from_boundary(&subset, d);
                if ball.radius >= 0.0 && boundary.iter().all(|p| ball.contains(p)) {
                    let better = best
                        .as_ref()
                        .map(|b| ball.radius < b.radius)
                        .unwrap_or(true);
                    if better {
                        best = Some(ball);
                    }
                }
            }
            best.unwrap_or_else(|| EnclosingBall::empty(d))
        }
    }
}

/// Circumscribed ball of affinely independent points (unique smallest ball
/// having all of them on its boundary).
fn circumball(points: &[DVector<f64>]) -> Option<EnclosingBall> {
    let d = points[0].len();
    let m = points.len() - 1;
    let base = &points[0];
    let mut gram = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    let offsets: Vec<DVector<f64>> = points[1..].iter().map(|p| p - base).collect();
    for i in 0..m {
        for j in 0..m {
            gram[(i, j)] = 2.0 * offsets[i].dot(&offsets[j]);
        }
        rhs[i] = offsets[i].norm_squared();
    }
    let mu = gram.lu().solve(&rhs)?;
    let mut center = base.clone();
    for i in 0..m {
        center += &offsets[i] * mu[i];
    }
    let radius = (base - &center).norm();
    if !radius.is_finite() {
        return None;
    }
    let _ = d;
    Some(EnclosingBall {
        center,
        radius,
        minimal: true,
    })
}

/// Draws a quadratic ensemble for the given agent ids: minimizers uniform in
/// `[-spread, spread]^d`, eigenvalues of each curvature drawn from the given
/// ranges under a seeded random rotation. Deterministic per `(seed, id)`.
pub fn sample_ensemble(
    d: usize,
    agent_ids: &[usize],
    spread: f64,
    mu_range: (f64, f64),
    l_range: (f64, f64),
    seed: u64,
) -> Result<CostEnsemble> {
    if d == 0 {
        return Err(Error::config("dimension must be positive"));
    }
    if agent_ids.is_empty() {
        return Err(Error::EmptyInput("agent ids"));
    }
    if !(mu_range.0 > 0.0 && mu_range.0 <= mu_range.1) {
        return Err(Error::config(format!(
            "invalid strong-convexity range [{}, {}]",
            mu_range.0, mu_range.1
        )));
    }
    if !(l_range.0 <= l_range.1 && mu_range.0 <= l_range.1) {
        return Err(Error::config(format!(
            "invalid Lipschitz range [{}, {}]",
            l_range.0, l_range.1
        )));
    }
    if spread < 0.0 {
        return Err(Error::config("spread must be non-negative"));
    }

    let mut costs: BTreeMap<usize, Arc<dyn CostFunction>> = BTreeMap::new();
    for &id in agent_ids {
        if costs.contains_key(&id) {
            return Err(Error::config(format!("duplicate agent id {id}")));
        }
        let mut rng = seed::stream(seed, &[purpose::ENSEMBLE, id as u64]);
        let center = DVector::from_fn(d, |_, _| sample_range(&mut rng, -spread, spread));

        let mut eigs = Vec::with_capacity(d);
        if d == 1 {
            eigs.push(sample_range(&mut rng, mu_range.0, l_range.1));
        } else {
            let low = sample_range(&mut rng, mu_range.0, mu_range.1);
            let high = sample_range(&mut rng, l_range.0, l_range.1).max(low);
            eigs.push(low);
            for _ in 0..d - 2 {
                eigs.push(sample_range(&mut rng, low, high));
            }
            eigs.push(high);
        }

        let rotation = random_rotation(d, &mut rng);
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(eigs));
        let q = &rotation * lambda * rotation.transpose();
        // Re-symmetrize to wash out rounding from the triple product.
        let q = (&q + q.transpose()) * 0.5;
        costs.insert(id, Arc::new(QuadraticCost::new(center, q, 0.0)?));
    }
    CostEnsemble::new(costs)
}

fn sample_range(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Seeded random orthogonal matrix (QR of a Gaussian sample, signs fixed so
/// the factorization is canonical).
fn random_rotation(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    if d == 1 {
        return DMatrix::identity(1, 1);
    }
    let gauss = DMatrix::from_fn(d, d, |_, _| {
        // Box-Muller keeps the dependency footprint at `rand` itself.
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    });
    let qr = gauss.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Serializes a quadratic ensemble as a line-oriented text document with 17
/// significant digits per value (exact `f64` round-trip).
pub fn write_ensemble(ensemble: &CostEnsemble) -> Result<String> {
    let mut out = String::new();
    let d = ensemble.dim();
    writeln!(out, "redgraf-ensemble v1").unwrap();
    writeln!(out, "dim {d}").unwrap();
    writeln!(out, "agents {}", ensemble.len()).unwrap();
    for (id, cost) in ensemble.costs() {
        let q = cost.as_quadratic().ok_or_else(|| {
            Error::state("only quadratic ensembles have a text serialization")
        })?;
        writeln!(out, "agent {id}").unwrap();
        out.push('m');
        for v in q.center().iter() {
            write!(out, " {v:.17e}").unwrap();
        }
        out.push('\n');
        out.push('q');
        for i in 0..d {
            for j in 0..d {
                write!(out, " {:.17e}", q.curvature()[(i, j)]).unwrap();
            }
        }
        out.push('\n');
        writeln!(out, "b {:.17e}", q.offset()).unwrap();
    }
    Ok(out)
}

/// Parses the [`write_ensemble`] format.
pub fn parse_ensemble(text: &str) -> Result<CostEnsemble> {
    let mut lines = text.lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l.trim().to_string())),
            None => Err(Error::parse(0, format!("unexpected end of document, expected {expect}"))),
        }
    };

    let (ln, header) = next_line("header")?;
    if header != "redgraf-ensemble v1" {
        return Err(Error::parse(ln, "expected header 'redgraf-ensemble v1'"));
    }
    let (ln, dim_line) = next_line("dim")?;
    let d: usize = parse_tagged(&dim_line, "dim", ln)?;
    let (ln, agents_line) = next_line("agents")?;
    let count: usize = parse_tagged(&agents_line, "agents", ln)?;
    if d == 0 || count == 0 {
        return Err(Error::parse(ln, "dimension and agent count must be positive"));
    }

    let mut costs: BTreeMap<usize, Arc<dyn CostFunction>> = BTreeMap::new();
    for _ in 0..count {
        let (ln, agent_line) = next_line("agent")?;
        let id: usize = parse_tagged(&agent_line, "agent", ln)?;
        let (ln, m_line) = next_line("m")?;
        let m = parse_floats(&m_line, "m", d, ln)?;
        let (ln, q_line) = next_line("q")?;
        let q = parse_floats(&q_line, "q", d * d, ln)?;
        let (ln, b_line) = next_line("b")?;
        let b = parse_floats(&b_line, "b", 1, ln)?[0];
        let cost = QuadraticCost::new(
            DVector::from_vec(m),
            DMatrix::from_row_slice(d, d, &q),
            b,
        )
        .map_err(|e| Error::parse(ln, e.to_string()))?;
        if costs.insert(id, Arc::new(cost)).is_some() {
            return Err(Error::parse(ln, format!("duplicate agent id {id}")));
        }
    }
    CostEnsemble::new(costs)
}

fn parse_tagged<T: std::str::FromStr>(line: &str, tag: &str, ln: usize) -> Result<T> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| Error::parse(ln, format!("expected '{tag} <value>'")))?;
    rest.trim()
        .parse()
        .map_err(|_| Error::parse(ln, format!("invalid value in '{line}'")))
}

fn parse_floats(line: &str, tag: &str, expected: usize, ln: usize) -> Result<Vec<f64>> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| Error::parse(ln, format!("expected '{tag} <values>'")))?;
    let values: std::result::Result<Vec<f64>, _> =
        rest.split_whitespace().map(str::parse).collect();
    let values = values.map_err(|_| Error::parse(ln, format!("invalid float in '{line}'")))?;
    if values.len() != expected {
        return Err(Error::parse(
            ln,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn scalar_quadratic(center: f64, scale: f64, offset: f64) -> QuadraticCost {
        QuadraticCost::isotropic(vec1(center), scale, offset).unwrap()
    }

    #[test]
    fn eval_and_grad_at_minimizer_is_offset_and_zero() {
        let f = scalar_quadratic(5.0, 1.0, 2.5);
        let (v, g) = eval_and_grad(&f, &vec1(5.0)).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn eval_and_grad_hand_values() {
        let f = scalar_quadratic(5.0, 1.0, 0.0);
        let (v, g) = eval_and_grad(&f, &vec1(0.0)).unwrap();
        assert_eq!(v, 12.5);
        assert_eq!(g[0], -5.0);

        let f = QuadraticCost::new(
            vec2(0.0, 0.0),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]),
            0.0,
        )
        .unwrap();
        let (v, g) = eval_and_grad(&f, &vec2(1.0, 1.0)).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(g, vec2(1.0, 3.0));
    }

    #[test]
    fn eval_rejects_dimension_mismatch() {
        let f = scalar_quadratic(0.0, 1.0, 0.0);
        assert!(matches!(
            f.eval(&vec2(0.0, 1.0)),
            Err(Error::Dimension { .. })
        ));
    }

    fn ensemble_of(costs: Vec<QuadraticCost>) -> CostEnsemble {
        let map: BTreeMap<usize, Arc<dyn CostFunction>> = costs
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i, Arc::new(c) as Arc<dyn CostFunction>))
            .collect();
        CostEnsemble::new(map).unwrap()
    }

    #[test]
    fn global_minimizer_symmetric_pair() {
        let ens = ensemble_of(vec![
            scalar_quadratic(0.0, 1.0, 0.0),
            scalar_quadratic(4.0, 1.0, 0.0),
        ]);
        let geo = global_minimizer(&ens).unwrap();
        assert!((geo.x_star[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn global_minimizer_weighted_pair() {
        // (1 + 3) x = 0 + 3 * 4 = 12 so x* = 3.
        let ens = ensemble_of(vec![
            scalar_quadratic(0.0, 1.0, 0.0),
            scalar_quadratic(4.0, 3.0, 0.0),
        ]);
        let geo = global_minimizer(&ens).unwrap();
        assert!((geo.x_star[0] - 3.0).abs() < 1e-12);
        assert!(ens.average_gradient(&geo.x_star).unwrap().norm() <= 1e-8);
    }

    #[test]
    fn global_minimizer_single_agent() {
        let ens = ensemble_of(vec![scalar_quadratic(1.5, 2.0, 0.0)]);
        let geo = global_minimizer(&ens).unwrap();
        assert!((geo.x_star[0] - 1.5).abs() < 1e-12);
        assert_eq!(geo.r_star, 0.0);
        assert_eq!(geo.epsilon_star, 0.0);
    }

    /// Hides the closed form so the generic descent path is exercised.
    #[derive(Debug)]
    struct Opaque(QuadraticCost);

    impl CostFunction for Opaque {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn eval(&self, x: &DVector<f64>) -> Result<f64> {
            self.0.eval(x)
        }
        fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            self.0.gradient(x)
        }
        fn strong_convexity(&self) -> f64 {
            self.0.strong_convexity()
        }
        fn gradient_lipschitz(&self) -> f64 {
            self.0.gradient_lipschitz()
        }
    }

    #[test]
    fn generic_descent_matches_exact_solve() {
        let qs = vec![
            QuadraticCost::new(
                vec2(1.0, -2.0),
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
                0.0,
            )
            .unwrap(),
            QuadraticCost::new(
                vec2(-0.5, 3.0),
                DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 2.5]),
                0.0,
            )
            .unwrap(),
        ];
        let exact = {
            let map: BTreeMap<usize, Arc<dyn CostFunction>> = qs
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, c)| (i, Arc::new(c) as Arc<dyn CostFunction>))
                .collect();
            global_minimizer(&CostEnsemble::new(map).unwrap()).unwrap()
        };
        let generic = {
            let map: BTreeMap<usize, Arc<dyn CostFunction>> = qs
                .into_iter()
                .enumerate()
                .map(|(i, c)| (i, Arc::new(Opaque(c)) as Arc<dyn CostFunction>))
                .collect();
            global_minimizer(&CostEnsemble::new(map).unwrap()).unwrap()
        };
        assert!((&exact.x_star - &generic.x_star).norm() < 1e-7);
    }

    #[test]
    fn enclosing_ball_two_points() {
        let ball = enclosing_ball(&[vec2(0.0, 0.0), vec2(2.0, 0.0)]).unwrap();
        assert!((ball.center[0] - 1.0).abs() < 1e-12);
        assert!(ball.center[1].abs() < 1e-12);
        assert!((ball.radius - 1.0).abs() < 1e-12);
        assert!(ball.minimal);
    }

    #[test]
    fn enclosing_ball_single_point() {
        let ball = enclosing_ball(&[vec2(0.0, 0.0)]).unwrap();
        assert_eq!(ball.radius, 0.0);
    }

    #[test]
    fn enclosing_ball_interior_third_point() {
        let ball = enclosing_ball(&[vec2(0.0, 0.0), vec2(2.0, 0.0), vec2(1.0, 1.0)]).unwrap();
        assert!((ball.center[0] - 1.0).abs() < 1e-9);
        assert!(ball.center[1].abs() < 1e-9);
        assert!((ball.radius - 1.0).abs() < 1e-9);
    }

    #[test]
    fn enclosing_ball_empty_errors() {
        assert!(matches!(
            enclosing_ball(&[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn enclosing_ball_collinear() {
        let ball =
            enclosing_ball(&[vec2(0.0, 0.0), vec2(1.0, 0.0), vec2(3.0, 0.0)]).unwrap();
        assert!((ball.center[0] - 1.5).abs() < 1e-9);
        assert!((ball.radius - 1.5).abs() < 1e-9);
    }

    #[test]
    fn enclosing_ball_high_dimension_flagged() {
        let p = |v: [f64; 4]| DVector::from_vec(v.to_vec());
        let ball = enclosing_ball(&[
            p([0.0, 0.0, 0.0, 0.0]),
            p([1.0, 0.0, 0.0, 0.0]),
            p([0.0, 1.0, 0.0, 0.0]),
        ])
        .unwrap();
        assert!(!ball.minimal);
    }

    #[test]
    fn sampler_degenerate_spread() {
        let ens = sample_ensemble(2, &[0, 1, 2], 0.0, (1.0, 2.0), (2.0, 3.0), 9).unwrap();
        let geo = global_minimizer(&ens).unwrap();
        assert!(geo.r_star.abs() < 1e-12);
        assert!(geo.x_star.norm() < 1e-9);
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = sample_ensemble(3, &[0, 4, 7], 2.0, (1.0, 2.0), (2.0, 4.0), 33).unwrap();
        let b = sample_ensemble(3, &[0, 4, 7], 2.0, (1.0, 2.0), (2.0, 4.0), 33).unwrap();
        assert_eq!(write_ensemble(&a).unwrap(), write_ensemble(&b).unwrap());
    }

    #[test]
    fn sampler_identity_curvature_when_ranges_pin_eigenvalues() {
        let ens = sample_ensemble(2, &[0, 1], 1.0, (1.0, 1.0), (1.0, 1.0), 5).unwrap();
        for (_, c) in ens.costs() {
            let q = c.as_quadratic().unwrap();
            let delta = (q.curvature() - DMatrix::<f64>::identity(2, 2)).amax();
            assert!(delta < 1e-12, "curvature deviates from identity by {delta}");
        }
    }

    #[test]
    fn sampler_rejects_bad_ranges() {
        assert!(sample_ensemble(2, &[0], 1.0, (0.0, 1.0), (1.0, 2.0), 1).is_err());
        assert!(sample_ensemble(2, &[0], 1.0, (3.0, 2.0), (1.0, 2.0), 1).is_err());
        assert!(sample_ensemble(2, &[0], -1.0, (1.0, 2.0), (1.0, 2.0), 1).is_err());
    }

    #[test]
    fn ensemble_round_trips_exactly() {
        let ens = sample_ensemble(2, &[1, 5, 9], 3.0, (1.0, 2.0), (2.0, 5.0), 77).unwrap();
        let text = write_ensemble(&ens).unwrap();
        let back = parse_ensemble(&text).unwrap();
        assert_eq!(text, write_ensemble(&back).unwrap());
        assert_eq!(ens.mu_tilde(), back.mu_tilde());
        assert_eq!(ens.l_tilde(), back.l_tilde());
    }

    #[test]
    fn ensemble_parse_reports_line() {
        let err = parse_ensemble("redgraf-ensemble v1\ndim 2\nagents 1\nagent 0\nm 1.0\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
