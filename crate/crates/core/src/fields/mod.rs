//! Interaction fields `(v, sigma, T)` and the step size bound `theta`.
//!
//! A field receives the measure it interacts with as an [`Ensemble`]: the
//! live empirical measure in the N-agent system, or a frozen time marginal in
//! the mean-field solver. Implementations must be pure functions of their
//! arguments and must sum over the ensemble in index order, so results do not
//! depend on the worker count.

mod builtin;
mod validate;

pub use builtin::{
    AttractionRepulsion, BuiltinField, Cbo, FieldSpec, LeaderFollower, MeanReversion, Objective,
};
pub use validate::{estimate_lipschitz, validate_geometry, GeometryReport, LipschitzEstimate, Violation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{AgentState, Ensemble};
use crate::strategy::{apply_flux, finish_simplex, MixedStrategy, ZeroMassMeasure, SIMPLEX_TOL};

/// Declared global Lipschitz constants `(L_v, L_sigma, L_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConstants {
    pub drift: f64,
    pub diffusion: f64,
    pub flux: f64,
}

pub trait FieldSet: Send + Sync {
    /// Largest admissible strategy step; `lambda + theta * T` must stay in the simplex.
    fn theta(&self) -> f64;

    /// Dimension `m` of the Brownian motion for positions in `R^dim`.
    fn noise_dim(&self, dim: usize) -> usize;

    /// Writes `v(law; y)` (length `d`).
    fn drift(&self, law: &Ensemble, y: &AgentState, out: &mut [f64]);

    /// Writes `sigma(law; y)` as a row-major `d x m` matrix.
    fn diffusion(&self, law: &Ensemble, y: &AgentState, out: &mut [f64]);

    /// Writes `T(law; y)`, a zero-mass vector of length `M`.
    fn strategy_flux(&self, law: &Ensemble, y: &AgentState, out: &mut [f64]);

    fn declared_lipschitz(&self) -> Option<LipschitzConstants> {
        None
    }
}

/// `T(law; y)` checked for zero mass.
pub fn flux<F: FieldSet + ?Sized>(f: &F, law: &Ensemble, y: &AgentState) -> Result<ZeroMassMeasure> {
    let mut out = vec![0.0; y.strategies()];
    f.strategy_flux(law, y, &mut out);
    ZeroMassMeasure::new(out)
}

/// `G(law; y) = lambda + theta * T(law; y)`, which the geometric condition
/// requires to be a mixed strategy.
pub fn apply_g<F: FieldSet + ?Sized>(f: &F, law: &Ensemble, y: &AgentState) -> Result<MixedStrategy> {
    let t = flux(f, law, y)?;
    let target = apply_flux(y.strategy.weights(), t.weights(), f.theta())
        .map_err(|e| with_position(e, &y.position))?;
    finish_simplex(target, y.strategy.weights()).map_err(|e| with_position(e, &y.position))
}

/// Smallest entry of `lambda + theta * T(law; y)`; negative means the
/// geometric condition fails at `y`.
pub fn geometric_margin<F: FieldSet + ?Sized>(f: &F, law: &Ensemble, y: &AgentState) -> (f64, usize) {
    let mut t = vec![0.0; y.strategies()];
    f.strategy_flux(law, y, &mut t);
    let theta = f.theta();
    y.strategy
        .weights()
        .iter()
        .zip(&t)
        .map(|(l, g)| l + theta * g)
        .enumerate()
        .fold((f64::INFINITY, 0), |(best, at), (i, v)| if v < best { (v, i) } else { (best, at) })
}

pub(crate) fn with_position(e: Error, position: &[f64]) -> Error {
    match e {
        Error::Geometry { strategy, entry, value, .. } => Error::Geometry {
            position: position.to_vec(),
            strategy,
            entry,
            value,
        },
        other => other,
    }
}

pub(crate) fn zero_mass_ok(t: &[f64]) -> bool {
    t.iter().sum::<f64>().abs() <= SIMPLEX_TOL
}
