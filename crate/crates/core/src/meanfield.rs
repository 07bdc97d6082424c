//! Fixed-point solver for the mean-field (McKean-Vlasov) limit.
//!
//! A candidate law is an ensemble of paths. One application of the map `S`
//! integrates the same number of independent single-agent paths in which
//! every field evaluation uses the frozen time marginal of the candidate
//! instead of a live ensemble. The Brownian paths and initial data are the
//! same at every iteration, so `S` is a deterministic self-map and its
//! iterates can be compared directly.

use serde::{Deserialize, Serialize};

use crate::engine::{step_with, Law, SimConfig};
use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::rng::BrownianSource;
use crate::sampler::InitSampler;
use crate::state::{path_w2, Ensemble, TrajectoryBundle};
use crate::strategy::PureStrategySpace;

/// A law on path space, represented by `paths()` equally weighted paths.
#[derive(Debug, Clone, PartialEq)]
pub struct LawEnsemble {
    pub bundle: TrajectoryBundle,
    /// Number of applications of `S` that produced this law.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// `gaps[n]` is the path-space W2 distance between iterates `n + 1` and `n`.
    pub gaps: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
    pub law_size: usize,
    pub seed: u64,
}

fn check_grid(psi: &TrajectoryBundle, cfg: &SimConfig) -> Result<()> {
    let grid = cfg.grid();
    if psi.times().len() != grid.len() || psi.times().iter().zip(&grid).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::input(format!(
            "frozen law lives on a grid of {} points, run needs {} points up to T = {}",
            psi.times().len(),
            grid.len(),
            cfg.horizon
        )));
    }
    Ok(())
}

/// Integrates the agents of `init` against the frozen marginals of `psi`.
/// Agent `i` uses Brownian stream `i` of `cfg.seed`. Returns the full-grid
/// bundle.
pub fn frozen_paths<F: FieldSet + ?Sized>(
    init: &Ensemble,
    psi: &TrajectoryBundle,
    f: &F,
    cfg: &SimConfig,
) -> Result<TrajectoryBundle> {
    cfg.validate(f.theta())?;
    check_grid(psi, cfg)?;
    if psi.dim() != init.dim() || psi.strategies() != init.strategies() {
        return Err(Error::input("frozen law and initial ensemble have different state shapes"));
    }
    let source = BrownianSource::new(cfg.seed);
    let dt = cfg.dt();
    let mut bundle = TrajectoryBundle::with_capacity(cfg.grid(), init.len(), init.dim(), init.strategies());
    bundle.push_time_major(init);
    let mut current = init.clone();
    for k in 0..cfg.steps {
        let marginal = psi.time_marginal(k)?;
        current = step_with(&current, Law::Frozen(&marginal), f, &source, dt, k)?;
        bundle.push_time_major(&current);
    }
    Ok(bundle.finish_time_major())
}

/// Final states of `init` integrated against `psi`; no path storage.
pub fn frozen_final<F: FieldSet + ?Sized>(
    init: &Ensemble,
    psi: &TrajectoryBundle,
    f: &F,
    cfg: &SimConfig,
) -> Result<Ensemble> {
    cfg.validate(f.theta())?;
    check_grid(psi, cfg)?;
    let source = BrownianSource::new(cfg.seed);
    let dt = cfg.dt();
    let mut current = init.clone();
    for k in 0..cfg.steps {
        let marginal = psi.time_marginal(k)?;
        current = step_with(&current, Law::Frozen(&marginal), f, &source, dt, k)?;
    }
    Ok(current)
}

/// Solves the frozen-law problem for `cfg.agents` paths with initial data
/// drawn from `init` under `cfg.seed`.
pub fn solve_auxiliary<F: FieldSet + ?Sized>(
    psi: &LawEnsemble,
    f: &F,
    init: &InitSampler,
    cfg: &SimConfig,
) -> Result<LawEnsemble> {
    let start = init.sample_ensemble(cfg.seed, cfg.agents, psi.bundle.strategies())?;
    let bundle = frozen_paths(&start, &psi.bundle, f, cfg)?;
    Ok(LawEnsemble { bundle, iteration: psi.iteration + 1 })
}

/// `S(psi)`; identical to [`solve_auxiliary`], named for the fixed-point map.
pub fn apply_s<F: FieldSet + ?Sized>(
    psi: &LawEnsemble,
    f: &F,
    init: &InitSampler,
    cfg: &SimConfig,
) -> Result<LawEnsemble> {
    solve_auxiliary(psi, f, init, cfg)
}

/// The starting law: every path constant in time at its initial datum.
pub fn initial_law(init: &InitSampler, strategies: usize, cfg: &SimConfig) -> Result<LawEnsemble> {
    let start = init.sample_ensemble(cfg.seed, cfg.agents, strategies)?;
    Ok(LawEnsemble { bundle: TrajectoryBundle::constant(&start, cfg.grid())?, iteration: 0 })
}

/// Iterates `S` from [`initial_law`] until the path-space W2 gap between
/// successive iterates is at most `tol`, or `max_iter` applications.
/// Non-convergence is reported, not raised.
pub fn fixed_point<F: FieldSet + ?Sized>(
    f: &F,
    init: &InitSampler,
    space: &PureStrategySpace,
    cfg: &SimConfig,
    tol: f64,
    max_iter: usize,
) -> Result<(LawEnsemble, FixedPointReport)> {
    if !(tol > 0.0) {
        return Err(Error::Contract(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Contract("max_iter must be at least 1".into()));
    }
    cfg.validate(f.theta())?;
    let mut law = initial_law(init, space.len(), cfg)?;
    let mut report = FixedPointReport {
        gaps: Vec::new(),
        iterations: 0,
        converged: false,
        tol,
        law_size: cfg.agents,
        seed: cfg.seed,
    };
    while report.iterations < max_iter {
        let next = apply_s(&law, f, init, cfg)?;
        report.iterations += 1;
        let gap = if tol.is_infinite() { 0.0 } else { path_w2(&next.bundle, &law.bundle, space)? };
        report.gaps.push(gap);
        law = next;
        if gap <= tol {
            report.converged = true;
            break;
        }
    }
    Ok((law, report))
}
