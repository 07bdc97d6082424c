use serde::{Deserialize, Serialize};

use super::{FieldSet, LipschitzConstants};
use crate::error::{Error, Result};
use crate::state::{AgentState, Ensemble};

fn one() -> f64 {
    1.0
}

/// Leaders (pure strategy 0) pull followers (pure strategy 1) spatially;
/// each agent's strategy relaxes toward the strategies of agents near it, in
/// proportion to how much of a follower it is.
///
/// ```text
/// v     = -confinement * x + attraction * l_F * mean_j[ l_L^j * K(x_j - x) ],  K(z) = z / (1 + |z|)
/// sigma = noise * I
/// T     = (l_F / tau) * mean_j[ w(|x_j - x|) * (l^j - l) ],                    w(r) = exp(-r^2 / (2 radius^2))
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderFollower {
    #[serde(default = "one")]
    pub attraction: f64,
    #[serde(default = "LeaderFollower::default_confinement")]
    pub confinement: f64,
    #[serde(default = "LeaderFollower::default_noise")]
    pub noise: f64,
    /// Relaxation time of strategies; defaults to `theta`. Must be `>= theta`.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "one")]
    pub radius: f64,
}

impl LeaderFollower {
    fn default_confinement() -> f64 {
        0.5
    }

    fn default_noise() -> f64 {
        0.3
    }
}

impl Default for LeaderFollower {
    fn default() -> Self {
        Self {
            attraction: 1.0,
            confinement: Self::default_confinement(),
            noise: Self::default_noise(),
            tau: None,
            radius: 1.0,
        }
    }
}

/// Bounded long-range attraction, Gaussian short-range repulsion, and local
/// strategy consensus.
///
/// ```text
/// v     = mean_j[ attraction * K(x_j - x) + repulsion * (x - x_j) * exp(-|x - x_j|^2 / length^2) ]
/// sigma = noise * I
/// T     = (1 / tau) * mean_j[ w(|x_j - x|) * (l^j - l) ]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractionRepulsion {
    #[serde(default = "one")]
    pub attraction: f64,
    #[serde(default = "AttractionRepulsion::default_repulsion")]
    pub repulsion: f64,
    #[serde(default = "AttractionRepulsion::default_length")]
    pub length: f64,
    #[serde(default = "AttractionRepulsion::default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "one")]
    pub radius: f64,
}

impl AttractionRepulsion {
    fn default_repulsion() -> f64 {
        0.5
    }

    fn default_length() -> f64 {
        0.5
    }

    fn default_noise() -> f64 {
        0.2
    }
}

/// Ornstein-Uhlenbeck positions with optional pull to the population mean,
/// strategies relaxing toward a blend of a fixed target and the population
/// mean strategy.
///
/// ```text
/// v     = -drift_rate * x + drift_coupling * (mean_x - x)
/// sigma = noise * I
/// T     = ((1 - coupling) * target + coupling * mean_l - l) / tau
/// ```
///
/// With `coupling = drift_coupling = 0` the field ignores the measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanReversion {
    /// Defaults to the barycenter of the simplex.
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub coupling: f64,
    #[serde(default = "one")]
    pub drift_rate: f64,
    #[serde(default)]
    pub drift_coupling: f64,
    #[serde(default)]
    pub noise: f64,
}

impl Default for MeanReversion {
    fn default() -> Self {
        Self { target: None, tau: None, coupling: 0.0, drift_rate: 1.0, drift_coupling: 0.0, noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Objective {
    /// `|x - center|^2`
    Quadratic { center: Vec<f64> },
    /// `sum_i z_i^2 - 10 cos(2 pi z_i) + 10` with `z = x - center`.
    Rastrigin { center: Vec<f64> },
}

impl Objective {
    fn center(&self) -> &[f64] {
        match self {
            Objective::Quadratic { center } | Objective::Rastrigin { center } => center,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Quadratic { center } => x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum(),
            Objective::Rastrigin { center } => x
                .iter()
                .zip(center)
                .map(|(a, c)| {
                    let z = a - c;
                    z * z - 10.0 * (2.0 * std::f64::consts::PI * z).cos() + 10.0
                })
                .sum(),
        }
    }
}

/// Consensus-based optimization: agents drift to the Gibbs-weighted mean
/// `m = sum_j e^{-alpha f(x_j)} x_j / sum_j e^{-alpha f(x_j)}` with noise
/// proportional to their distance from it, and relax their strategy toward
/// the same weighted mean of strategies.
///
/// ```text
/// v     = -drift * (x - m)
/// sigma = noise * diag(|x - m|)
/// T     = coupling * (l_m - l) / tau
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cbo {
    #[serde(default = "Cbo::default_alpha")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub drift: f64,
    #[serde(default = "Cbo::default_noise")]
    pub noise: f64,
    pub objective: Objective,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "one")]
    pub coupling: f64,
}

impl Cbo {
    fn default_alpha() -> f64 {
        10.0
    }

    fn default_noise() -> f64 {
        0.5
    }
}

/// Builtin field families, in the config form
/// `{"variant": "<name>", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params", rename_all = "snake_case")]
pub enum FieldSpec {
    LeaderFollower(LeaderFollower),
    AttractionRepulsion(AttractionRepulsion),
    StrategyMeanReversion(MeanReversion),
    CboStyle(Cbo),
}

impl FieldSpec {
    pub fn name(&self) -> &'static str {
        match self {
            FieldSpec::LeaderFollower(_) => "leader_follower",
            FieldSpec::AttractionRepulsion(_) => "attraction_repulsion",
            FieldSpec::StrategyMeanReversion(_) => "strategy_mean_reversion",
            FieldSpec::CboStyle(_) => "cbo_style",
        }
    }

    fn tau(&self) -> Option<f64> {
        match self {
            FieldSpec::LeaderFollower(p) => p.tau,
            FieldSpec::AttractionRepulsion(p) => p.tau,
            FieldSpec::StrategyMeanReversion(p) => p.tau,
            FieldSpec::CboStyle(p) => p.tau,
        }
    }
}

/// A [`FieldSpec`] bound to `theta` and a strategy count.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinField {
    spec: FieldSpec,
    theta: f64,
    tau: f64,
    strategies: usize,
    target: Vec<f64>,
    lipschitz: Option<LipschitzConstants>,
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl BuiltinField {
    /// Checks the structural requirements (positivity, dimensions). The
    /// documented range `tau >= theta` is checked separately by
    /// [`BuiltinField::check_ranges`], so that fields violating the geometric
    /// condition can still be built and inspected by the validator.
    pub fn new(spec: FieldSpec, theta: f64, strategies: usize) -> Result<Self> {
        require(theta > 0.0 && theta.is_finite(), || format!("theta must be positive, got {theta}"))?;
        require(strategies >= 1, || "need at least one strategy".into())?;
        let tau = spec.tau().unwrap_or(theta);
        require(tau > 0.0 && tau.is_finite(), || format!("tau must be positive, got {tau}"))?;
        let nonneg = |name: &str, v: f64| require(v >= 0.0 && v.is_finite(), || format!("{name} must be >= 0, got {v}"));
        let positive = |name: &str, v: f64| require(v > 0.0 && v.is_finite(), || format!("{name} must be > 0, got {v}"));
        let unit = |name: &str, v: f64| require((0.0..=1.0).contains(&v), || format!("{name} must lie in [0, 1], got {v}"));
        let mut target = Vec::new();
        match &spec {
            FieldSpec::LeaderFollower(p) => {
                require(strategies == 2, || {
                    format!("leader_follower needs exactly 2 strategies (leader, follower), got {strategies}")
                })?;
                nonneg("attraction", p.attraction)?;
                nonneg("confinement", p.confinement)?;
                nonneg("noise", p.noise)?;
                positive("radius", p.radius)?;
            }
            FieldSpec::AttractionRepulsion(p) => {
                nonneg("attraction", p.attraction)?;
                nonneg("repulsion", p.repulsion)?;
                positive("length", p.length)?;
                nonneg("noise", p.noise)?;
                positive("radius", p.radius)?;
            }
            FieldSpec::StrategyMeanReversion(p) => {
                target = match &p.target {
                    Some(t) => {
                        crate::strategy::MixedStrategy::new(t.clone())
                            .map_err(|e| Error::Config(format!("target: {e}")))?;
                        require(t.len() == strategies, || {
                            format!("target has {} entries, expected {strategies}", t.len())
                        })?;
                        t.clone()
                    }
                    None => vec![1.0 / strategies as f64; strategies],
                };
                unit("coupling", p.coupling)?;
                nonneg("drift_rate", p.drift_rate)?;
                nonneg("drift_coupling", p.drift_coupling)?;
                nonneg("noise", p.noise)?;
            }
            FieldSpec::CboStyle(p) => {
                nonneg("alpha", p.alpha)?;
                nonneg("drift", p.drift)?;
                nonneg("noise", p.noise)?;
                unit("coupling", p.coupling)?;
                require(!p.objective.center().is_empty(), || "objective center must be non-empty".into())?;
            }
        }
        Ok(Self { spec, theta, tau, strategies, target, lipschitz: None })
    }

    pub fn with_declared_lipschitz(mut self, l: Option<LipschitzConstants>) -> Self {
        self.lipschitz = l;
        self
    }

    /// The documented parameter ranges; `tau >= theta` guarantees the
    /// geometric condition for every builtin.
    pub fn check_ranges(&self) -> Result<()> {
        require(self.tau >= self.theta, || {
            format!("tau = {} must be >= theta = {}", self.tau, self.theta)
        })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Whether the field ignores its measure argument.
    pub fn is_measure_independent(&self) -> bool {
        match &self.spec {
            FieldSpec::StrategyMeanReversion(p) => p.coupling == 0.0 && p.drift_coupling == 0.0,
            _ => false,
        }
    }

    /// Position dimension required by the field, if it fixes one.
    pub fn required_dim(&self) -> Option<usize> {
        match &self.spec {
            FieldSpec::CboStyle(p) => Some(p.objective.center().len()),
            _ => None,
        }
    }

    fn gibbs_weights(&self, p: &Cbo, law: &Ensemble) -> Vec<f64> {
        let values: Vec<f64> = law.iter().map(|s| p.objective.value(&s.position)).collect();
        let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
        values.iter().map(|v| (-p.alpha * (v - best)).exp()).collect()
    }

    fn consensus_point(&self, p: &Cbo, law: &Ensemble) -> Vec<f64> {
        let w = self.gibbs_weights(p, law);
        let total: f64 = w.iter().sum();
        let mut m = vec![0.0; law.dim()];
        for (s, wj) in law.iter().zip(&w) {
            for (acc, x) in m.iter_mut().zip(&s.position) {
                *acc += wj * x;
            }
        }
        m.iter_mut().for_each(|v| *v /= total);
        m
    }
}

fn bounded_pull(from: &[f64], to: &[f64], scale: f64, out: &mut [f64]) {
    let norm = from.iter().zip(to).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let k = scale / (1.0 + norm);
    for ((o, a), b) in out.iter_mut().zip(from).zip(to) {
        *o += k * (b - a);
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(scale / N) * sum_j w(|x_j - x|) (l^j - l)`.
fn local_consensus(law: &Ensemble, y: &AgentState, radius: f64, scale: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let inv = 1.0 / (2.0 * radius * radius);
    let lambda = y.strategy.weights();
    for s in law {
        let w = (-sq_dist(&s.position, &y.position) * inv).exp();
        for ((o, lj), l) in out.iter_mut().zip(s.strategy.weights()).zip(lambda) {
            *o += w * (lj - l);
        }
    }
    let c = scale / law.len() as f64;
    out.iter_mut().for_each(|v| *v *= c);
}

fn scaled_identity(noise: f64, dim: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..dim {
        out[i * dim + i] = noise;
    }
}

impl FieldSet for BuiltinField {
    fn theta(&self) -> f64 {
        self.theta
    }

    fn noise_dim(&self, dim: usize) -> usize {
        dim
    }

    fn drift(&self, law: &Ensemble, y: &AgentState, out: &mut [f64]) {
        let x = &y.position;
        match &self.spec {
            FieldSpec::LeaderFollower(p) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let follower = y.strategy.weights()[1];
                let scale = p.attraction * follower / law.len() as f64;
                if scale != 0.0 {
                    for s in law {
                        bounded_pull(x, &s.position, scale * s.strategy.weights()[0], out);
                    }
                }
                for (o, xi) in out.iter_mut().zip(x) {
                    *o -= p.confinement * xi;
                }
            }
            FieldSpec::AttractionRepulsion(p) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let n = law.len() as f64;
                let inv_len2 = 1.0 / (p.length * p.length);
                for s in law {
                    bounded_pull(x, &s.position, p.attraction / n, out);
                    let push = p.repulsion / n * (-sq_dist(x, &s.position) * inv_len2).exp();
                    for ((o, xi), xj) in out.iter_mut().zip(x).zip(&s.position) {
                        *o += push * (xi - xj);
                    }
                }
            }
            FieldSpec::StrategyMeanReversion(p) => {
                let mean = if p.drift_coupling != 0.0 { law.mean_position() } else { vec![0.0; x.len()] };
                for ((o, xi), mi) in out.iter_mut().zip(x).zip(&mean) {
                    *o = -p.drift_rate * xi + p.drift_coupling * (mi - xi);
                }
            }
            FieldSpec::CboStyle(p) => {
                let m = self.consensus_point(p, law);
                for ((o, xi), mi) in out.iter_mut().zip(x).zip(&m) {
                    *o = -p.drift * (xi - mi);
                }
            }
        }
    }

    fn diffusion(&self, law: &Ensemble, y: &AgentState, out: &mut [f64]) {
        let d = y.dim();
        match &self.spec {
            FieldSpec::LeaderFollower(p) => scaled_identity(p.noise, d, out),
            FieldSpec::AttractionRepulsion(p) => scaled_identity(p.noise, d, out),
            FieldSpec::StrategyMeanReversion(p) => scaled_identity(p.noise, d, out),
            FieldSpec::CboStyle(p) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let m = self.consensus_point(p, law);
                for i in 0..d {
                    out[i * d + i] = p.noise * (y.position[i] - m[i]).abs();
                }
            }
        }
    }

    fn strategy_flux(&self, law: &Ensemble, y: &AgentState, out: &mut [f64]) {
        let lambda = y.strategy.weights();
        match &self.spec {
            FieldSpec::LeaderFollower(p) => {
                local_consensus(law, y, p.radius, lambda[1] / self.tau, out);
            }
            FieldSpec::AttractionRepulsion(p) => {
                local_consensus(law, y, p.radius, 1.0 / self.tau, out);
            }
            FieldSpec::StrategyMeanReversion(p) => {
                let mean = if p.coupling != 0.0 { law.mean_strategy() } else { vec![0.0; lambda.len()] };
                for (((o, t), mj), l) in out.iter_mut().zip(&self.target).zip(&mean).zip(lambda) {
                    *o = ((1.0 - p.coupling) * t + p.coupling * mj - l) / self.tau;
                }
            }
            FieldSpec::CboStyle(p) => {
                let w = self.gibbs_weights(p, law);
                let total: f64 = w.iter().sum();
                out.iter_mut().for_each(|v| *v = 0.0);
                for (s, wj) in law.iter().zip(&w) {
                    for ((o, lj), l) in out.iter_mut().zip(s.strategy.weights()).zip(lambda) {
                        *o += wj * (lj - l);
                    }
                }
                let c = p.coupling / (total * self.tau);
                out.iter_mut().for_each(|v| *v *= c);
            }
        }
        debug_assert!(super::zero_mass_ok(out), "builtin flux must have zero mass");
    }

    fn declared_lipschitz(&self) -> Option<LipschitzConstants> {
        self.lipschitz
    }
}
