//! Initial-data distributions and probe generators for field validation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::state::{AgentState, Ensemble};
use crate::strategy::MixedStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionInit {
    pub mean: Vec<f64>,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyInit {
    /// Flat Dirichlet, i.e. uniform on the simplex.
    Uniform,
    Dirichlet { alpha: Vec<f64> },
    Fixed { weights: MixedStrategy },
}

/// I.i.d. initial states: Gaussian positions, strategies from [`StrategyInit`].
///
/// Agent `i` under seed `s` always receives the same state, whatever the
/// ensemble size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSampler {
    pub position: PositionInit,
    pub strategy: StrategyInit,
}

impl InitSampler {
    pub fn gaussian(mean: Vec<f64>, std: f64, strategy: StrategyInit) -> Self {
        Self { position: PositionInit { mean, std }, strategy }
    }

    pub fn dim(&self) -> usize {
        self.position.mean.len()
    }

    pub fn validate(&self, strategies: usize) -> Result<()> {
        if self.position.mean.is_empty() {
            return Err(Error::Config("init.position.mean must be non-empty".into()));
        }
        if !(self.position.std >= 0.0) || !self.position.std.is_finite() {
            return Err(Error::Config("init.position.std must be finite and >= 0".into()));
        }
        match &self.strategy {
            StrategyInit::Uniform => {}
            StrategyInit::Dirichlet { alpha } => {
                if alpha.len() != strategies || alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
                    return Err(Error::Config(format!(
                        "init.strategy.alpha must hold {strategies} positive numbers"
                    )));
                }
            }
            StrategyInit::Fixed { weights } => {
                if weights.len() != strategies {
                    return Err(Error::Config(format!(
                        "init.strategy.weights must have {strategies} entries"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64, index: usize, strategies: usize) -> Result<AgentState> {
        self.validate(strategies)?;
        let mut rng = stream(seed, Purpose::Initial, index as u64, 0);
        let position = self
            .position
            .mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + self.position.std * z
            })
            .collect();
        let strategy = match &self.strategy {
            StrategyInit::Uniform => dirichlet(&mut rng, &vec![1.0; strategies]),
            StrategyInit::Dirichlet { alpha } => dirichlet(&mut rng, alpha),
            StrategyInit::Fixed { weights } => weights.clone(),
        };
        AgentState::new(position, strategy)
    }

    pub fn sample_ensemble(&self, seed: u64, n: usize, strategies: usize) -> Result<Ensemble> {
        let states = (0..n)
            .map(|i| self.sample(seed, i, strategies))
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(states)
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: &[f64]) -> MixedStrategy {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("validated shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        return MixedStrategy::barycenter(alpha.len());
    }
    normalized(draws.into_iter().map(|g| g / total).collect())
}

fn normalized(mut w: Vec<f64>) -> MixedStrategy {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    MixedStrategy::new(w).expect("normalized nonnegative weights")
}

/// Generates `(ensemble, state)` probes for the field validators.
///
/// The first probes put the probed strategy at every vertex, every edge
/// midpoint and the barycenter of the simplex; later probes are random, with
/// a third of them on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSampler {
    pub dim: usize,
    pub strategies: usize,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "default_position_scale")]
    pub position_scale: f64,
    /// Pairs share one ensemble (Lipschitz estimates at fixed measure).
    #[serde(default)]
    pub share_ensemble: bool,
    /// Pairs share the position (Lipschitz estimates in the strategy only).
    #[serde(default)]
    pub share_position: bool,
}

fn default_ensemble_size() -> usize {
    8
}

fn default_position_scale() -> f64 {
    2.0
}

impl ProbeSampler {
    pub fn new(dim: usize, strategies: usize) -> Self {
        Self {
            dim,
            strategies,
            ensemble_size: default_ensemble_size(),
            position_scale: default_position_scale(),
            share_ensemble: false,
            share_position: false,
        }
    }

    /// Strategies visited before random probes start.
    pub fn structured_strategies(&self) -> Vec<MixedStrategy> {
        let m = self.strategies;
        let mut out: Vec<MixedStrategy> = (0..m).map(|i| MixedStrategy::vertex(m, i)).collect();
        for i in 0..m {
            for j in i + 1..m {
                let mut w = vec![0.0; m];
                w[i] = 0.5;
                w[j] = 0.5;
                out.push(MixedStrategy::new(w).expect("edge midpoint"));
            }
        }
        if m > 2 {
            out.push(MixedStrategy::barycenter(m));
        }
        out
    }

    fn random_strategy(&self, rng: &mut ChaCha8Rng) -> MixedStrategy {
        let m = self.strategies;
        match rng.random_range(0..3) {
            0 => MixedStrategy::vertex(m, rng.random_range(0..m)),
            1 if m > 1 => {
                // A point on a random edge.
                let i = rng.random_range(0..m);
                let j = (i + 1 + rng.random_range(0..m - 1)) % m;
                let t: f64 = rng.random();
                let mut w = vec![0.0; m];
                w[i] = t;
                w[j] = 1.0 - t;
                normalized(w)
            }
            _ => dirichlet(rng, &vec![1.0; m]),
        }
    }

    fn random_position(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.position_scale * z
            })
            .collect()
    }

    fn random_ensemble(&self, rng: &mut ChaCha8Rng) -> Ensemble {
        let states = (0..self.ensemble_size.max(1))
            .map(|_| AgentState {
                position: self.random_position(rng),
                strategy: self.random_strategy(rng),
            })
            .collect();
        Ensemble::new(states).expect("uniform shapes")
    }

    /// Probe number `index` under `seed`.
    pub fn probe(&self, seed: u64, index: usize) -> (Ensemble, AgentState) {
        let mut rng = stream(seed, Purpose::Validation, index as u64, 0);
        let structured = self.structured_strategies();
        let strategy = structured
            .get(index)
            .cloned()
            .unwrap_or_else(|| self.random_strategy(&mut rng));
        let position = self.random_position(&mut rng);
        (self.random_ensemble(&mut rng), AgentState { position, strategy })
    }

    /// Pair number `index` under `seed`, honoring the sharing flags.
    pub fn pair(&self, seed: u64, index: usize) -> ((Ensemble, AgentState), (Ensemble, AgentState)) {
        let mut rng = stream(seed, Purpose::Validation, index as u64, 1);
        let e1 = self.random_ensemble(&mut rng);
        let e2 = if self.share_ensemble { e1.clone() } else { self.random_ensemble(&mut rng) };
        let x1 = self.random_position(&mut rng);
        let x2 = if self.share_position { x1.clone() } else { self.random_position(&mut rng) };
        let y1 = AgentState { position: x1, strategy: self.random_strategy(&mut rng) };
        let y2 = AgentState { position: x2, strategy: self.random_strategy(&mut rng) };
        ((e1, y1), (e2, y2))
    }
}
