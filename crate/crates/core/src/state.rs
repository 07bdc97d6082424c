//! Agent states in `R^d x P(U)`, ensembles (empirical measures) and
//! discretely sampled trajectories.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::strategy::{bl_distance, MixedStrategy, PureStrategySpace};
use crate::transport::{uniform_transport, CostMatrix};

/// Position and mixed strategy of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec<f64>,
    pub strategy: MixedStrategy,
}

impl AgentState {
    pub fn new(position: Vec<f64>, strategy: MixedStrategy) -> Result<Self> {
        if let Some(i) = position.iter().position(|x| !x.is_finite()) {
            return Err(Error::input(format!("position coordinate {i} is not finite")));
        }
        Ok(Self { position, strategy })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    pub fn strategies(&self) -> usize {
        self.strategy.len()
    }
}

/// Uniformly weighted collection of agent states; the empirical measure
/// `(1/N) sum_i delta_{y_i}`. Serializes as a JSON array of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AgentState>", into = "Vec<AgentState>")]
pub struct Ensemble {
    states: Vec<AgentState>,
}

impl Ensemble {
    pub fn new(states: Vec<AgentState>) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::input("ensemble must contain at least one state"))?;
        let (d, m) = (first.dim(), first.strategies());
        if let Some(i) = states.iter().position(|s| s.dim() != d || s.strategies() != m) {
            return Err(Error::input(format!(
                "state {i} has shape ({}, {}), expected ({d}, {m})",
                states[i].dim(),
                states[i].strategies()
            )));
        }
        Ok(Self { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn strategies(&self) -> usize {
        self.states[0].strategies()
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AgentState> {
        self.states.iter()
    }

    pub fn into_states(self) -> Vec<AgentState> {
        self.states
    }

    pub fn mean_position(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for s in &self.states {
            for (acc, x) in mean.iter_mut().zip(&s.position) {
                *acc += x;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        mean
    }

    pub fn mean_strategy(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.strategies()];
        for s in &self.states {
            for (acc, w) in mean.iter_mut().zip(s.strategy.weights()) {
                *acc += w;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        mean
    }
}

impl TryFrom<Vec<AgentState>> for Ensemble {
    type Error = Error;

    fn try_from(states: Vec<AgentState>) -> Result<Self> {
        Self::new(states)
    }
}

impl From<Ensemble> for Vec<AgentState> {
    fn from(e: Ensemble) -> Self {
        e.states
    }
}

impl<'a> IntoIterator for &'a Ensemble {
    type Item = &'a AgentState;
    type IntoIter = std::slice::Iter<'a, AgentState>;

    fn into_iter(self) -> Self::IntoIter {
        self.states.iter()
    }
}

/// `t_k = k * T / K` for `k = 0..=K`.
pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
}

/// `N` paths sampled on a uniform time grid, stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    times: Vec<f64>,
    dim: usize,
    strategies: usize,
    paths: usize,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl TrajectoryBundle {
    /// Builds a bundle from `paths[i][k]`.
    pub fn from_paths(times: Vec<f64>, paths: &[Vec<AgentState>]) -> Result<Self> {
        check_grid(&times)?;
        let first = paths
            .first()
            .and_then(|p| p.first())
            .ok_or_else(|| Error::input("bundle needs at least one path"))?;
        let (dim, strategies) = (first.dim(), first.strategies());
        let mut positions = Vec::with_capacity(paths.len() * times.len() * dim);
        let mut weights = Vec::with_capacity(paths.len() * times.len() * strategies);
        for (i, path) in paths.iter().enumerate() {
            if path.len() != times.len() {
                return Err(Error::input(format!(
                    "path {i} has {} states for {} grid times",
                    path.len(),
                    times.len()
                )));
            }
            for s in path {
                if s.dim() != dim || s.strategies() != strategies {
                    return Err(Error::input(format!("path {i} has a state of the wrong shape")));
                }
                positions.extend_from_slice(&s.position);
                weights.extend_from_slice(s.strategy.weights());
            }
        }
        Ok(Self { times, dim, strategies, paths: paths.len(), positions, weights })
    }

    /// Each path constant in time at the corresponding ensemble state.
    pub fn constant(initial: &Ensemble, times: Vec<f64>) -> Result<Self> {
        let paths: Vec<Vec<AgentState>> = initial
            .iter()
            .map(|s| vec![s.clone(); times.len()])
            .collect();
        Self::from_paths(times, &paths)
    }

    pub(crate) fn with_capacity(times: Vec<f64>, paths: usize, dim: usize, strategies: usize) -> Self {
        let k = times.len();
        Self {
            times,
            dim,
            strategies,
            paths,
            positions: Vec::with_capacity(paths * k * dim),
            weights: Vec::with_capacity(paths * k * strategies),
        }
    }

    /// Appends one grid time for all paths. Only for time-major assembly by the
    /// engines; see [`TrajectoryBundle::finish_time_major`].
    pub(crate) fn push_time_major(&mut self, ensemble: &Ensemble) {
        for s in ensemble {
            self.positions.extend_from_slice(&s.position);
            self.weights.extend_from_slice(s.strategy.weights());
        }
    }

    /// Transposes storage filled by `push_time_major` into path-major order.
    pub(crate) fn finish_time_major(mut self) -> Self {
        let (n, k, d, m) = (self.paths, self.times.len(), self.dim, self.strategies);
        assert_eq!(self.positions.len(), n * k * d, "incomplete bundle");
        let mut pos = vec![0.0; n * k * d];
        let mut w = vec![0.0; n * k * m];
        for t in 0..k {
            for i in 0..n {
                let src = t * n + i;
                let dst = i * k + t;
                pos[dst * d..(dst + 1) * d].copy_from_slice(&self.positions[src * d..(src + 1) * d]);
                w[dst * m..(dst + 1) * m].copy_from_slice(&self.weights[src * m..(src + 1) * m]);
            }
        }
        self.positions = pos;
        self.weights = w;
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `K` (the grid has `K + 1` points).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn strategies(&self) -> usize {
        self.strategies
    }

    pub fn position(&self, path: usize, k: usize) -> &[f64] {
        let idx = path * self.times.len() + k;
        &self.positions[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn strategy(&self, path: usize, k: usize) -> &[f64] {
        let idx = path * self.times.len() + k;
        &self.weights[idx * self.strategies..(idx + 1) * self.strategies]
    }

    pub fn state(&self, path: usize, k: usize) -> AgentState {
        AgentState {
            position: self.position(path, k).to_vec(),
            strategy: MixedStrategy::from_trusted(self.strategy(path, k).to_vec()),
        }
    }

    /// The ensemble of all paths at grid time `t_k`.
    pub fn time_marginal(&self, k: usize) -> Result<Ensemble> {
        if k >= self.times.len() {
            return Err(Error::input(format!(
                "grid index {k} out of range 0..={}",
                self.times.len() - 1
            )));
        }
        Ok(Ensemble { states: (0..self.paths).map(|i| self.state(i, k)).collect() })
    }

    /// Keeps only the listed paths, in the given order.
    pub fn select_paths(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::input("selection must keep at least one path"));
        }
        let k = self.times.len();
        let mut positions = Vec::with_capacity(indices.len() * k * self.dim);
        let mut weights = Vec::with_capacity(indices.len() * k * self.strategies);
        for &i in indices {
            if i >= self.paths {
                return Err(Error::input(format!("path {i} out of range")));
            }
            positions.extend_from_slice(&self.positions[i * k * self.dim..(i + 1) * k * self.dim]);
            weights.extend_from_slice(&self.weights[i * k * self.strategies..(i + 1) * k * self.strategies]);
        }
        Ok(Self { times: self.times.clone(), paths: indices.len(), positions, weights, ..*self })
    }

    /// Glues `later`, whose first grid time must equal this bundle's last, onto
    /// the end of this bundle. The shared time point is kept once.
    pub fn concat(&self, later: &TrajectoryBundle) -> Result<Self> {
        if later.paths != self.paths || later.dim != self.dim || later.strategies != self.strategies {
            return Err(Error::input("bundles have different shapes"));
        }
        let last = *self.times.last().expect("grid is non-empty");
        if (later.times[0] - last).abs() > 1e-12 {
            return Err(Error::input("bundles do not share an endpoint"));
        }
        let mut times = self.times.clone();
        times.extend_from_slice(&later.times[1..]);
        check_grid(&times)?;
        let mut paths = Vec::with_capacity(self.paths);
        for i in 0..self.paths {
            let mut p: Vec<AgentState> = (0..self.times.len()).map(|k| self.state(i, k)).collect();
            p.extend((1..later.times.len()).map(|k| later.state(i, k)));
            paths.push(p);
        }
        Self::from_paths(times, &paths)
    }

    /// CSV with columns `path_id,t,x_1..x_d,w_1..w_M`, one row per (path, time).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::from("path_id,t");
        for j in 1..=self.dim {
            header.push_str(&format!(",x_{j}"));
        }
        for j in 1..=self.strategies {
            header.push_str(&format!(",w_{j}"));
        }
        writeln!(out, "{header}")?;
        let mut line = String::new();
        for i in 0..self.paths {
            for (k, t) in self.times.iter().enumerate() {
                line.clear();
                line.push_str(&format!("{i},{t}"));
                for x in self.position(i, k) {
                    line.push_str(&format!(",{x}"));
                }
                for w in self.strategy(i, k) {
                    line.push_str(&format!(",{w}"));
                }
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::input("time grid needs at least two points"));
    }
    let horizon = times[times.len() - 1] - times[0];
    let step = horizon / (times.len() - 1) as f64;
    for (k, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::input(format!("time grid is not increasing at index {k}")));
        }
        if ((w[1] - w[0]) - step).abs() > 1e-12 {
            return Err(Error::input(format!("time grid is not uniform at index {k}")));
        }
    }
    Ok(())
}

/// `||x_a - x_b||_2 + ||lambda_a - lambda_b||_BL`.
pub fn state_norm(a: &AgentState, b: &AgentState, space: &PureStrategySpace) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::input(format!("positions of dimension {} and {}", a.dim(), b.dim())));
    }
    if a.strategies() != space.len() || b.strategies() != space.len() {
        return Err(Error::input("strategy length does not match the strategy space"));
    }
    Ok(raw_distance(&a.position, a.strategy.weights(), &b.position, b.strategy.weights(), space))
}

pub(crate) fn raw_distance(
    xa: &[f64],
    la: &[f64],
    xb: &[f64],
    lb: &[f64],
    space: &PureStrategySpace,
) -> f64 {
    let euclid = xa.iter().zip(xb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    euclid + bl_distance(space, la, lb)
}

/// Norm of a state against the zero state: `||x|| + ||lambda||_BL`.
pub(crate) fn raw_norm(x: &[f64], lambda: &[f64], space: &PureStrategySpace) -> f64 {
    let euclid = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    euclid + crate::strategy::bl_norm_unchecked(space, lambda)
}

fn check_order(p: u32) -> Result<()> {
    if p == 1 || p == 2 {
        Ok(())
    } else {
        Err(Error::input(format!("Wasserstein order must be 1 or 2, got {p}")))
    }
}

fn check_same_shape(a: &Ensemble, b: &Ensemble, space: &PureStrategySpace) -> Result<()> {
    if a.dim() != b.dim() || a.strategies() != b.strategies() || a.strategies() != space.len() {
        return Err(Error::input("ensembles have incompatible shapes"));
    }
    Ok(())
}

/// Cost matrix `state_norm(a_i, b_j)^p`.
pub fn state_cost_matrix(
    p: u32,
    a: &Ensemble,
    b: &Ensemble,
    space: &PureStrategySpace,
) -> Result<CostMatrix> {
    check_order(p)?;
    check_same_shape(a, b, space)?;
    let cols = b.len();
    let rows: Vec<Vec<f64>> = par::map_indexed(a.len(), |i| {
        let sa = &a.states[i];
        b.states
            .iter()
            .map(|sb| {
                let d = raw_distance(&sa.position, sa.strategy.weights(), &sb.position, sb.strategy.weights(), space);
                d.powi(p as i32)
            })
            .collect()
    });
    CostMatrix::new(a.len(), cols, rows.concat())
}

/// Exact `W_p` between two uniformly weighted ensembles in the product metric.
pub fn w_product(p: u32, a: &Ensemble, b: &Ensemble, space: &PureStrategySpace) -> Result<f64> {
    let cost = state_cost_matrix(p, a, b, space)?;
    Ok(uniform_transport(&cost)?.powf(1.0 / p as f64))
}

/// Cost matrix `max_k state_norm(a_i(t_k), b_j(t_k))^2` between two bundles on
/// the same grid.
pub fn path_cost_matrix(
    a: &TrajectoryBundle,
    b: &TrajectoryBundle,
    space: &PureStrategySpace,
) -> Result<CostMatrix> {
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12)
    {
        return Err(Error::input("bundles live on different time grids"));
    }
    if a.dim != b.dim || a.strategies != b.strategies || a.strategies != space.len() {
        return Err(Error::input("bundles have incompatible shapes"));
    }
    let steps = a.times.len();
    let rows: Vec<Vec<f64>> = par::map_indexed(a.paths, |i| {
        (0..b.paths)
            .map(|j| {
                let mut worst = 0.0_f64;
                for k in 0..steps {
                    let d = raw_distance(a.position(i, k), a.strategy(i, k), b.position(j, k), b.strategy(j, k), space);
                    worst = worst.max(d);
                }
                worst * worst
            })
            .collect()
    });
    CostMatrix::new(a.paths, b.paths, rows.concat())
}

/// Path-space `W_2` with the sup-over-grid product norm as ground distance.
pub fn path_w2(a: &TrajectoryBundle, b: &TrajectoryBundle, space: &PureStrategySpace) -> Result<f64> {
    let cost = path_cost_matrix(a, b, space)?;
    Ok(uniform_transport(&cost)?.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn st(x: &[f64], w: &[f64]) -> AgentState {
        AgentState::new(x.to_vec(), MixedStrategy::new(w.to_vec()).unwrap()).unwrap()
    }

    fn space2() -> PureStrategySpace {
        PureStrategySpace::uniform(2, 1.0).unwrap()
    }

    #[test]
    fn state_norm_examples() {
        let s = space2();
        let a = st(&[0.5, -1.0], &[0.3, 0.7]);
        assert_eq!(state_norm(&a, &a, &s).unwrap(), 0.0);
        let b = st(&[1.5, -1.0], &[0.3, 0.7]);
        assert_abs_diff_eq!(state_norm(&a, &b, &s).unwrap(), 1.0, epsilon = 1e-15);
        let c = st(&[0.0], &[1.0, 0.0]);
        let d = st(&[0.0], &[0.0, 1.0]);
        assert_abs_diff_eq!(state_norm(&c, &d, &s).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert!(state_norm(&a, &c, &s).is_err());
    }

    #[test]
    fn ensemble_shape_checks() {
        assert!(Ensemble::new(vec![]).is_err());
        assert!(Ensemble::new(vec![st(&[0.0], &[1.0, 0.0]), st(&[0.0, 1.0], &[1.0, 0.0])]).is_err());
        let e = Ensemble::new(vec![st(&[0.0], &[1.0, 0.0]), st(&[2.0], &[0.0, 1.0])]).unwrap();
        assert_eq!(e.mean_position(), vec![1.0]);
        assert_eq!(e.mean_strategy(), vec![0.5, 0.5]);
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"[{"position":[0.0],"strategy":[1.0,0.0]},{"position":[2.0],"strategy":[0.0,1.0]}]"#);
        let back: Ensemble = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn w_product_of_diracs_is_distance() {
        let s = space2();
        let a = Ensemble::new(vec![st(&[0.0, 0.0], &[1.0, 0.0])]).unwrap();
        let b = Ensemble::new(vec![st(&[3.0, 4.0], &[0.0, 1.0])]).unwrap();
        let d = state_norm(&a.states()[0], &b.states()[0], &s).unwrap();
        assert_abs_diff_eq!(w_product(1, &a, &b, &s).unwrap(), d, epsilon = 1e-12);
        assert_abs_diff_eq!(w_product(2, &a, &b, &s).unwrap(), d, epsilon = 1e-12);
        assert_eq!(w_product(1, &a, &a, &s).unwrap(), 0.0);
        assert!(w_product(3, &a, &b, &s).is_err());
    }

    #[test]
    fn grid_validation() {
        let e = Ensemble::new(vec![st(&[0.0], &[1.0, 0.0])]).unwrap();
        assert!(TrajectoryBundle::constant(&e, vec![0.0]).is_err());
        assert!(TrajectoryBundle::constant(&e, vec![0.0, 0.5, 0.6]).is_err());
        assert!(TrajectoryBundle::constant(&e, vec![0.0, 0.5, 0.5]).is_err());
        assert!(TrajectoryBundle::constant(&e, uniform_grid(1.0, 10)).is_ok());
    }

    #[test]
    fn constant_bundle_marginals() {
        let e = Ensemble::new(vec![st(&[0.0], &[1.0, 0.0]), st(&[2.0], &[0.25, 0.75])]).unwrap();
        let b = TrajectoryBundle::constant(&e, uniform_grid(2.0, 4)).unwrap();
        assert_eq!(b.time_marginal(0).unwrap(), e);
        assert_eq!(b.time_marginal(3).unwrap(), e);
        assert!(b.time_marginal(5).is_err());
    }

    #[test]
    fn concat_marginals_come_from_the_right_piece() {
        let e0 = Ensemble::new(vec![st(&[0.0], &[1.0, 0.0])]).unwrap();
        let e1 = Ensemble::new(vec![st(&[1.0], &[0.5, 0.5])]).unwrap();
        let first = TrajectoryBundle::constant(&e0, uniform_grid(1.0, 2)).unwrap();
        let later = TrajectoryBundle::constant(&e1, vec![1.0, 1.5, 2.0]).unwrap();
        let joined = first.concat(&later).unwrap();
        assert_eq!(joined.steps(), 4);
        assert_eq!(joined.time_marginal(1).unwrap(), first.time_marginal(1).unwrap());
        assert_eq!(joined.time_marginal(3).unwrap(), later.time_marginal(1).unwrap());
    }

    #[test]
    fn csv_layout() {
        let e = Ensemble::new(vec![st(&[0.5, -1.0], &[0.25, 0.75])]).unwrap();
        let b = TrajectoryBundle::constant(&e, uniform_grid(1.0, 1)).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "path_id,t,x_1,x_2,w_1,w_2\n0,0,0.5,-1,0.25,0.75\n0,1,0.5,-1,0.25,0.75\n");
    }
}
