//! Finite pure-strategy spaces and the measures that live on them.
//!
//! A [`PureStrategySpace`] is a finite metric space `(U, d)`. Mixed strategies
//! are probability vectors on `U`; the strategy field of an agent takes values
//! in the zero-mass measures ([`ZeroMassMeasure`]). Both are compared with the
//! bounded-Lipschitz norm
//!
//! ```text
//! ||mu||_BL = sup { sum_i phi_i mu_i : max_i |phi_i| + Lip(phi) <= 1 }
//! ```
//!
//! and with the order-1 Wasserstein distance induced by `d`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for membership in the probability simplex and for zero total mass.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawSpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
}

/// Finite metric space of pure strategies.
///
/// Serializes as `{"labels": [...], "dist": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct PureStrategySpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
    // D / (2 + D) for two-point spaces; the optimal sup-norm share of the BL unit ball.
    two_point_ratio: Option<f64>,
}

impl PureStrategySpace {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self> {
        let m = labels.len();
        if m == 0 {
            return Err(Error::input("strategy space needs at least one label"));
        }
        if dist.len() != m || dist.iter().any(|row| row.len() != m) {
            return Err(Error::input(format!("distance matrix must be {m}x{m}")));
        }
        let scale = dist
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
            .max(1.0);
        let tol = 1e-12 * scale;
        for i in 0..m {
            if dist[i][i] != 0.0 {
                return Err(Error::input(format!("dist[{i}][{i}] must be 0")));
            }
            for j in 0..m {
                let dij = dist[i][j];
                if !dij.is_finite() {
                    return Err(Error::input(format!("dist[{i}][{j}] is not finite")));
                }
                if i != j && dij <= 0.0 {
                    return Err(Error::input(format!("dist[{i}][{j}] must be positive")));
                }
                if (dij - dist[j][i]).abs() > tol {
                    return Err(Error::input(format!("dist is not symmetric at ({i},{j})")));
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    if dist[i][k] > dist[i][j] + dist[j][k] + tol {
                        return Err(Error::input(format!(
                            "triangle inequality fails for ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        let two_point_ratio = (m == 2).then(|| dist[0][1] / (2.0 + dist[0][1]));
        Ok(Self { labels, dist, two_point_ratio })
    }

    /// `m` strategies labelled `u0..u{m-1}`, all at mutual distance `d`.
    pub fn uniform(m: usize, d: f64) -> Result<Self> {
        let labels = (0..m).map(|i| format!("u{i}")).collect();
        let dist = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 0.0 } else { d }).collect())
            .collect();
        Self::new(labels, dist)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn dist_matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }
}

impl TryFrom<RawSpace> for PureStrategySpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        Self::new(raw.labels, raw.dist)
    }
}

impl From<PureStrategySpace> for RawSpace {
    fn from(space: PureStrategySpace) -> Self {
        RawSpace { labels: space.labels, dist: space.dist }
    }
}

/// A probability vector over the pure strategies. Serializes as a plain array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixedStrategy(Vec<f64>);

impl MixedStrategy {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::input("mixed strategy must have at least one weight"));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::input(format!("weight {i} = {w} is not a probability")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::input(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self(weights))
    }

    /// The Dirac mass on pure strategy `i`.
    pub fn vertex(m: usize, i: usize) -> Self {
        assert!(i < m, "vertex index {i} out of range for {m} strategies");
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        Self(w)
    }

    pub fn barycenter(m: usize) -> Self {
        assert!(m > 0);
        Self(vec![1.0 / m as f64; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_trusted(weights: Vec<f64>) -> Self {
        debug_assert!(MixedStrategy::new(weights.clone()).is_ok());
        Self(weights)
    }
}

impl TryFrom<Vec<f64>> for MixedStrategy {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<MixedStrategy> for Vec<f64> {
    fn from(s: MixedStrategy) -> Self {
        s.0
    }
}

/// A signed measure on the pure strategies with zero total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ZeroMassMeasure(Vec<f64>);

impl ZeroMassMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::input(format!("flux entry {i} is not finite")));
        }
        let total: f64 = weights.iter().sum();
        if total.abs() > SIMPLEX_TOL {
            return Err(Error::input(format!("flux has total mass {total:e}, expected 0")));
        }
        Ok(Self(weights))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    /// `a - b` for two mixed strategies of equal length.
    pub fn difference(a: &MixedStrategy, b: &MixedStrategy) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::input("strategies have different lengths"));
        }
        Ok(Self(a.0.iter().zip(&b.0).map(|(x, y)| x - y).collect()))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ZeroMassMeasure {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<ZeroMassMeasure> for Vec<f64> {
    fn from(m: ZeroMassMeasure) -> Self {
        m.0
    }
}

/// Bounded-Lipschitz norm of a signed measure on `space`.
///
/// One- and two-point spaces use the closed form of the LP optimum
/// (`max(|a + b|, D/(2+D) * (|a| + |b|))` for two points at distance `D`);
/// larger spaces solve the LP in [`bl_norm_lp`].
pub fn bl_norm(space: &PureStrategySpace, mu: &[f64]) -> Result<f64> {
    check_measure(space, mu)?;
    Ok(bl_norm_unchecked(space, mu))
}

/// BL norm of `a - b` without allocating on the two-point fast path.
pub fn bl_distance(space: &PureStrategySpace, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), space.len());
    debug_assert_eq!(b.len(), space.len());
    match space.len() {
        1 => (a[0] - b[0]).abs(),
        2 => {
            let (x, y) = (a[0] - b[0], a[1] - b[1]);
            two_point_bl(space, x, y)
        }
        _ => {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            solve_bl_lp(space, &diff)
        }
    }
}

fn two_point_bl(space: &PureStrategySpace, x: f64, y: f64) -> f64 {
    let ratio = space.two_point_ratio.expect("two-point space");
    (x + y).abs().max(ratio * (x.abs() + y.abs()))
}

pub(crate) fn bl_norm_unchecked(space: &PureStrategySpace, mu: &[f64]) -> f64 {
    match space.len() {
        1 => mu[0].abs(),
        2 => two_point_bl(space, mu[0], mu[1]),
        _ => solve_bl_lp(space, mu),
    }
}

/// Bounded-Lipschitz norm computed by always solving the dual LP
///
/// ```text
/// max  sum_i phi_i mu_i
/// s.t. -s <= phi_i <= s,  phi_i - phi_j <= l * d(i, j),  s + l <= 1,  s, l >= 0
/// ```
pub fn bl_norm_lp(space: &PureStrategySpace, mu: &[f64]) -> Result<f64> {
    check_measure(space, mu)?;
    Ok(solve_bl_lp(space, mu))
}

fn check_measure(space: &PureStrategySpace, mu: &[f64]) -> Result<()> {
    if mu.len() != space.len() {
        return Err(Error::input(format!(
            "measure has {} entries, space has {}",
            mu.len(),
            space.len()
        )));
    }
    if let Some(i) = mu.iter().position(|w| !w.is_finite()) {
        return Err(Error::input(format!("measure entry {i} is not finite")));
    }
    Ok(())
}

fn solve_bl_lp(space: &PureStrategySpace, mu: &[f64]) -> f64 {
    if mu.iter().all(|&w| w == 0.0) {
        return 0.0;
    }
    let m = space.len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let phi: Vec<_> = mu
        .iter()
        .map(|&w| lp.add_var(w, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let sup = lp.add_var(0.0, (0.0, 1.0));
    let lip = lp.add_var(0.0, (0.0, 1.0));
    lp.add_constraint([(sup, 1.0), (lip, 1.0)], ComparisonOp::Le, 1.0);
    for i in 0..m {
        lp.add_constraint([(phi[i], 1.0), (sup, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(phi[i], -1.0), (sup, -1.0)], ComparisonOp::Le, 0.0);
        for j in 0..m {
            if i != j {
                lp.add_constraint(
                    [(phi[i], 1.0), (phi[j], -1.0), (lip, -space.dist(i, j))],
                    ComparisonOp::Le,
                    0.0,
                );
            }
        }
    }
    // phi = 0 is always feasible and the feasible set is bounded.
    let solution = lp
        .solve()
        .ok()
        .and_then(|outcome| outcome.into_solution().ok())
        .expect("BL dual LP is feasible and bounded");
    solution.objective().max(0.0)
}

/// Order-1 Wasserstein distance between two mixed strategies, cost `d`.
pub fn w1_strategy(space: &PureStrategySpace, a: &MixedStrategy, b: &MixedStrategy) -> Result<f64> {
    let m = space.len();
    if a.len() != m || b.len() != m {
        return Err(Error::input(format!(
            "strategies of length {} and {} on a space of {m} strategies",
            a.len(),
            b.len()
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let plan: Vec<Vec<_>> = (0..m)
        .map(|i| (0..m).map(|j| lp.add_var(space.dist(i, j), (0.0, f64::INFINITY))).collect())
        .collect();
    for (i, row) in plan.iter().enumerate() {
        lp.add_constraint(row.iter().map(|&v| (v, 1.0)), ComparisonOp::Eq, a.0[i]);
    }
    // The last column constraint is implied by the others (total mass 1).
    for j in 0..m - 1 {
        lp.add_constraint(plan.iter().map(|row| (row[j], 1.0)), ComparisonOp::Eq, b.0[j]);
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::Internal(format!("transport LP failed: {e:?}")))?
        .into_solution()
        .map_err(|_| Error::Internal("transport LP interrupted".into()))?;
    Ok(solution.objective().max(0.0))
}

/// One explicit step `lambda + dt * flux`, written as the convex combination
/// `(1 - dt/theta) * lambda + (dt/theta) * (lambda + theta * flux)`.
///
/// Requires `dt <= theta` and `lambda + theta * flux` in the simplex. Entries
/// that land in `(-SIMPLEX_TOL, 0)` are clamped and the vector renormalized;
/// anything further out is a [`Error::Geometry`].
pub fn convex_step(
    lambda: &MixedStrategy,
    flux: &ZeroMassMeasure,
    dt: f64,
    theta: f64,
) -> Result<MixedStrategy> {
    if !(theta > 0.0) || !(dt > 0.0) {
        return Err(Error::Contract(format!("need dt > 0 and theta > 0, got dt={dt}, theta={theta}")));
    }
    if dt > theta {
        return Err(Error::Contract(format!("dt = {dt} exceeds theta = {theta}")));
    }
    if flux.len() != lambda.len() {
        return Err(Error::input("flux and strategy have different lengths"));
    }
    let target = apply_flux(lambda.weights(), flux.weights(), theta)?;
    let r = dt / theta;
    let next: Vec<f64> = lambda
        .0
        .iter()
        .zip(&target)
        .map(|(&l, &g)| (1.0 - r) * l + r * g)
        .collect();
    finish_simplex(next, lambda.weights())
}

/// `lambda + theta * flux`, checked against the simplex.
pub(crate) fn apply_flux(lambda: &[f64], flux: &[f64], theta: f64) -> Result<Vec<f64>> {
    let target: Vec<f64> = lambda.iter().zip(flux).map(|(&l, &f)| l + theta * f).collect();
    if let Some((entry, &value)) = target
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= -SIMPLEX_TOL))
    {
        return Err(Error::Geometry {
            position: Vec::new(),
            strategy: lambda.to_vec(),
            entry,
            value,
        });
    }
    Ok(target)
}

pub(crate) fn finish_simplex(mut w: Vec<f64>, origin: &[f64]) -> Result<MixedStrategy> {
    let mut clamped = false;
    for (entry, v) in w.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v <= -SIMPLEX_TOL || v.is_nan() {
                return Err(Error::Geometry {
                    position: Vec::new(),
                    strategy: origin.to_vec(),
                    entry,
                    value: *v,
                });
            }
            *v = 0.0;
            clamped = true;
        }
    }
    if clamped {
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
    }
    MixedStrategy::new(w)
}
