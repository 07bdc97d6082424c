//! Propagation-of-chaos experiments by synchronous coupling.
//!
//! The N-agent system and N copies of the frozen-law (mean-field) dynamics
//! start from the same initial data and consume the same Brownian streams;
//! the pathwise gap between agent `i` and copy `i` measures how far the
//! finite system is from its limit.

#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;
#[cfg(target_arch = "wasm32")]
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{solve_n_particle, SimConfig};
use crate::error::{Error, Result};
use crate::fields::FieldSet;
use crate::meanfield::{frozen_final, frozen_paths, LawEnsemble};
use crate::par;
use crate::rng::{derive_seed, Purpose};
use crate::sampler::InitSampler;
use crate::state::{raw_distance, w_product, TrajectoryBundle};
use crate::strategy::PureStrategySpace;

/// `sup_k state_norm(a_i(t_k), b_i(t_k))^2` for every path `i`.
pub fn pathwise_sup_gaps(a: &TrajectoryBundle, b: &TrajectoryBundle, space: &PureStrategySpace) -> Result<Vec<f64>> {
    if a.paths() != b.paths() || a.times().len() != b.times().len() {
        return Err(Error::input("bundles differ in path count or grid"));
    }
    Ok((0..a.paths())
        .map(|i| {
            (0..a.times().len())
                .map(|k| {
                    let d = raw_distance(a.position(i, k), a.strategy(i, k), b.position(i, k), b.strategy(i, k), space);
                    d * d
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Runs the coupled pair for `cfg.agents` agents under `cfg.seed` and
/// returns each agent's sup-over-grid squared gap.
pub fn coupled_run<F: FieldSet + ?Sized>(
    f: &F,
    cfg: &SimConfig,
    init: &InitSampler,
    law: &LawEnsemble,
    space: &PureStrategySpace,
) -> Result<Vec<f64>> {
    if law.bundle.strategies() != space.len() || law.bundle.dim() != init.dim() {
        return Err(Error::input("mean-field law does not match the state space"));
    }
    let mut full = cfg.clone();
    full.record_stride = 1;
    let start = init.sample_ensemble(cfg.seed, cfg.agents, space.len())?;
    let particles = solve_n_particle(&start, f, &full)?;
    let copies = frozen_paths(&start, &law.bundle, f, &full)?;
    pathwise_sup_gaps(&particles, &copies, space)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    /// `max_i sup_k |Y^i - Ybar^i|^2`; `None` if the cell failed.
    pub err: Option<f64>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub n: usize,
    pub reps: usize,
    /// Mean over successful repetitions of the worst agent's gap.
    pub err: f64,
    /// Standard error of `err`.
    pub stderr: f64,
    /// `max_i` of the per-agent gap averaged over repetitions.
    pub max_agent_mean: f64,
    pub per_rep: Vec<f64>,
    pub failures: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub results: Vec<CouplingResult>,
    pub cells: Vec<CellRecord>,
    /// Least-squares fit of `ln err` against `ln N`; absent when some `err`
    /// is not positive or fewer than two N have data.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub seed: u64,
}

/// Seed of repetition `rep`. Repetitions share seeds across N, so each N sees
/// the same initial data and noise for its first agents.
pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, Purpose::Repetition, rep as u64)
}

/// Coupled runs for every `(N, rep)` cell against the mean-field `law`.
/// A failing cell is recorded and skipped.
#[allow(clippy::too_many_arguments)]
pub fn chaos_sweep<F: FieldSet + ?Sized>(
    f: &F,
    template: &SimConfig,
    init: &InitSampler,
    law: &LawEnsemble,
    space: &PureStrategySpace,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<SweepResult> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::input("N grid must be non-empty, positive and strictly increasing"));
    }
    if reps == 0 {
        return Err(Error::input("need at least one repetition"));
    }
    template.validate(f.theta())?;
    let cells: Vec<(usize, usize)> = n_grid.iter().flat_map(|&n| (0..reps).map(move |r| (n, r))).collect();
    let runs = par::map_indexed(cells.len(), |c| {
        let (n, rep) = cells[c];
        let mut cfg = template.clone();
        cfg.agents = n;
        cfg.seed = rep_seed(seed, rep);
        let started = Instant::now();
        let gaps = coupled_run(f, &cfg, init, law, space);
        (gaps, cfg.seed, started.elapsed().as_secs_f64() * 1e3)
    });
    let mut records = Vec::with_capacity(cells.len());
    let mut results = Vec::with_capacity(n_grid.len());
    let mut runs = runs.into_iter();
    for &n in n_grid {
        let mut per_rep = Vec::with_capacity(reps);
        let mut agent_sums = vec![0.0; n];
        let mut failures = 0;
        let mut wall = 0.0;
        for rep in 0..reps {
            let (gaps, cell_seed, ms) = runs.next().expect("one run per cell");
            wall += ms;
            match gaps {
                Ok(g) => {
                    let worst = g.iter().cloned().fold(0.0, f64::max);
                    g.iter().zip(agent_sums.iter_mut()).for_each(|(v, s)| *s += v);
                    per_rep.push(worst);
                    records.push(CellRecord { n, rep, seed: cell_seed, err: Some(worst), wall_ms: ms, error: None });
                }
                Err(e) => {
                    failures += 1;
                    records.push(CellRecord {
                        n,
                        rep,
                        seed: cell_seed,
                        err: None,
                        wall_ms: ms,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        let ok = per_rep.len();
        let (err, stderr) = mean_stderr(&per_rep);
        let max_agent_mean = if ok == 0 {
            f64::NAN
        } else {
            agent_sums.iter().map(|s| s / ok as f64).fold(0.0, f64::max)
        };
        results.push(CouplingResult { n, reps, err, stderr, max_agent_mean, per_rep, failures, wall_ms: wall });
    }
    let (slope, intercept) = loglog_fit(&results);
    Ok(SweepResult { results, cells: records, slope, intercept, seed })
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn loglog_fit(results: &[CouplingResult]) -> (Option<f64>, Option<f64>) {
    if results.len() < 2 || results.iter().any(|r| !(r.err > 0.0)) {
        return (None, None);
    }
    let pts: Vec<(f64, f64)> = results.iter().map(|r| ((r.n as f64).ln(), r.err.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (Some(slope), Some(my - slope * mx))
}

/// Final states of `count` independent agents following the mean-field
/// dynamics (frozen law `law`), with initial data and noise from `seed`.
pub fn meanfield_samples<F: FieldSet + ?Sized>(
    f: &F,
    template: &SimConfig,
    init: &InitSampler,
    law: &LawEnsemble,
    count: usize,
    seed: u64,
) -> Result<crate::state::Ensemble> {
    let mut cfg = template.clone();
    cfg.agents = count;
    cfg.seed = seed;
    let start = init.sample_ensemble(seed, count, law.bundle.strategies())?;
    frozen_final(&start, &law.bundle, f, &cfg)
}

/// `W2` between the time-T empirical measure of `N` i.i.d. mean-field agents
/// and a reference sample of size `reference`, for each `N` in `n_grid`.
/// The reference and each sample use independent seeds derived from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_law_gaps<F: FieldSet + ?Sized>(
    f: &F,
    template: &SimConfig,
    init: &InitSampler,
    law: &LawEnsemble,
    space: &PureStrategySpace,
    n_grid: &[usize],
    reference: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let reference = meanfield_samples(f, template, init, law, reference, derive_seed(seed, Purpose::Repetition, 0))?;
    n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let sample = meanfield_samples(f, template, init, law, n, derive_seed(seed, Purpose::Repetition, 1 + j as u64))?;
            w_product(2, &sample, &reference, space)
        })
        .collect()
}
