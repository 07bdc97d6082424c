//! Euler-Maruyama solver for the N-agent system.
//!
//! Positions take an explicit Euler-Maruyama step; strategies take the convex
//! step `(1 - dt/theta) lambda + (dt/theta) (lambda + theta T)`, which stays in
//! the simplex whenever `dt <= theta` and the field satisfies the geometric
//! condition. All agents see the ensemble from the start of the step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::par;
use crate::rng::BrownianSource;
use crate::state::{raw_norm, uniform_grid, AgentState, Ensemble, TrajectoryBundle};
use crate::strategy::{convex_step, PureStrategySpace, ZeroMassMeasure};

fn default_stride() -> usize {
    1
}

/// Horizon, step count and agent count of a run. The step bound `theta` and
/// noise dimension come from the field, the state dimensions from the
/// initial ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub agents: usize,
    pub horizon: f64,
    pub steps: usize,
    /// Store every `record_stride`-th grid point; must divide `steps`.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Set from the experiment's top-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl SimConfig {
    pub fn new(agents: usize, horizon: f64, steps: usize, seed: u64) -> Self {
        Self { agents, horizon, steps, record_stride: 1, seed }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Checks `T > 0`, `K >= 1`, `N >= 1`, the stride, and `dt <= theta`.
    pub fn validate(&self, theta: f64) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.agents == 0 {
            return Err(Error::Config("agents must be at least 1".into()));
        }
        if self.record_stride == 0 || !self.steps.is_multiple_of(self.record_stride) {
            return Err(Error::Config(format!(
                "record_stride {} must be positive and divide steps {}",
                self.record_stride, self.steps
            )));
        }
        if self.dt() > theta {
            return Err(Error::Config(format!(
                "dt = T/K = {} exceeds theta = {theta}; increase steps",
                self.dt()
            )));
        }
        Ok(())
    }

    /// Full step grid `t_k = k T / K`.
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.horizon, self.steps)
    }

    /// Grid of the stored points.
    pub fn recorded_grid(&self) -> Vec<f64> {
        uniform_grid(self.horizon, self.steps / self.record_stride)
    }
}

/// Advances one agent by one step against `law`. `dw` holds its Brownian
/// increment.
pub(crate) fn advance<F: FieldSet + ?Sized>(
    f: &F,
    law: &Ensemble,
    y: &AgentState,
    dw: &[f64],
    dt: f64,
    agent: usize,
    step: usize,
) -> Result<AgentState> {
    let d = y.dim();
    let m = dw.len();
    let mut v = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    let mut t = vec![0.0; y.strategies()];
    f.drift(law, y, &mut v);
    f.diffusion(law, y, &mut s);
    f.strategy_flux(law, y, &mut t);
    let diverged = || Error::Divergence { agent, step, last_finite: None };
    let position: Vec<f64> = (0..d)
        .map(|r| {
            let noise: f64 = s[r * m..(r + 1) * m].iter().zip(dw).map(|(a, b)| a * b).sum();
            y.position[r] + v[r] * dt + noise
        })
        .collect();
    if position.iter().any(|x| !x.is_finite()) || t.iter().any(|x| !x.is_finite()) {
        return Err(diverged());
    }
    let flux = ZeroMassMeasure::new(t)?;
    let strategy = convex_step(&y.strategy, &flux, dt, f.theta())
        .map_err(|e| crate::fields::with_position(e, &y.position))?;
    Ok(AgentState { position, strategy })
}

/// Which measure the fields see during a step.
#[derive(Clone, Copy)]
pub(crate) enum Law<'a> {
    /// The agents' own empirical measure.
    Live,
    /// A marginal supplied from outside, read at the step's start time.
    Frozen(&'a Ensemble),
}

/// One synchronous step at grid index `k`, agent `i` driven by the stream
/// `(i + offset, k)` of `source`.
pub(crate) fn step_with<F: FieldSet + ?Sized>(
    current: &Ensemble,
    law: Law<'_>,
    f: &F,
    source: &BrownianSource,
    dt: f64,
    k: usize,
) -> Result<Ensemble> {
    let law = match law {
        Law::Live => current,
        Law::Frozen(e) => e,
    };
    let m = f.noise_dim(current.dim());
    let states = current.states();
    let next: Vec<Result<AgentState>> = par::map_indexed(states.len(), |i| {
        let mut dw = vec![0.0; m];
        source.increments(i, k, dt, &mut dw);
        advance(f, law, &states[i], &dw, dt, i, k)
    });
    collect_step(next, current)
}

fn collect_step(next: Vec<Result<AgentState>>, current: &Ensemble) -> Result<Ensemble> {
    let mut out = Vec::with_capacity(next.len());
    for r in next {
        match r {
            Ok(s) => out.push(s),
            Err(Error::Divergence { agent, step, .. }) => {
                return Err(Error::Divergence { agent, step, last_finite: Some(Box::new(current.clone())) })
            }
            Err(e) => return Err(e),
        }
    }
    Ensemble::new(out)
}

/// One step with explicit increments: `noise` is row-major `N x m`.
pub fn step<F: FieldSet + ?Sized>(states: &Ensemble, f: &F, noise: &[f64], dt: f64) -> Result<Ensemble> {
    if !(dt > 0.0) || dt > f.theta() {
        return Err(Error::Contract(format!("need 0 < dt <= theta, got dt = {dt}, theta = {}", f.theta())));
    }
    let m = f.noise_dim(states.dim());
    if noise.len() != states.len() * m {
        return Err(Error::input(format!(
            "expected {} increments ({} agents x {m}), got {}",
            states.len() * m,
            states.len(),
            noise.len()
        )));
    }
    let list = states.states();
    let next = par::map_indexed(list.len(), |i| advance(f, states, &list[i], &noise[i * m..(i + 1) * m], dt, i, 0));
    collect_step(next, states)
}

fn check_init<F: FieldSet + ?Sized>(init: &Ensemble, f: &F, cfg: &SimConfig) -> Result<()> {
    cfg.validate(f.theta())?;
    if init.len() != cfg.agents {
        return Err(Error::input(format!("initial ensemble has {} agents, config says {}", init.len(), cfg.agents)));
    }
    Ok(())
}

/// Runs `cfg.steps` synchronous steps from `init` with Brownian increments
/// from `cfg.seed`. Deterministic in `(init, f, cfg)` for any worker count.
pub fn solve_n_particle<F: FieldSet + ?Sized>(init: &Ensemble, f: &F, cfg: &SimConfig) -> Result<TrajectoryBundle> {
    check_init(init, f, cfg)?;
    let source = BrownianSource::new(cfg.seed);
    let dt = cfg.dt();
    let mut bundle = TrajectoryBundle::with_capacity(cfg.recorded_grid(), init.len(), init.dim(), init.strategies());
    bundle.push_time_major(init);
    let mut current = init.clone();
    for k in 0..cfg.steps {
        current = step_with(&current, Law::Live, f, &source, dt, k)?;
        if (k + 1) % cfg.record_stride == 0 {
            bundle.push_time_major(&current);
        }
    }
    Ok(bundle.finish_time_major())
}

/// Final ensemble only; skips trajectory storage.
pub fn solve_final<F: FieldSet + ?Sized>(init: &Ensemble, f: &F, cfg: &SimConfig) -> Result<Ensemble> {
    check_init(init, f, cfg)?;
    let source = BrownianSource::new(cfg.seed);
    let dt = cfg.dt();
    let mut current = init.clone();
    for k in 0..cfg.steps {
        current = step_with(&current, Law::Live, f, &source, dt, k)?;
    }
    Ok(current)
}

/// Monte Carlo estimate of `E[sup_k ||Y_{t_k}||^p]`, norms taken against the
/// zero state. `p` must be 2 or 4.
pub fn sup_moment(bundle: &TrajectoryBundle, p: u32, space: &PureStrategySpace) -> Result<f64> {
    if p != 2 && p != 4 {
        return Err(Error::input(format!("moment order must be 2 or 4, got {p}")));
    }
    if bundle.strategies() != space.len() {
        return Err(Error::input("bundle and strategy space disagree on M"));
    }
    let sups = par::map_indexed(bundle.paths(), |i| {
        (0..bundle.times().len())
            .map(|k| raw_norm(bundle.position(i, k), bundle.strategy(i, k), space).powi(p as i32))
            .fold(0.0_f64, f64::max)
    });
    Ok(sups.iter().sum::<f64>() / sups.len() as f64)
}
