use serde::{Deserialize, Serialize};

use super::{geometric_margin, FieldSet, LipschitzConstants};
use crate::error::{Error, Result};
use crate::sampler::ProbeSampler;
use crate::state::{state_norm, w_product};
use crate::strategy::{bl_distance, PureStrategySpace, SIMPLEX_TOL};

/// A probe at which `lambda + theta * T` left the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub probe: usize,
    pub position: Vec<f64>,
    pub strategy: Vec<f64>,
    pub entry: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub passed: bool,
    pub samples: usize,
    pub failures: usize,
    /// `min_i (lambda + theta * T)_i` over all probes.
    pub worst_margin: f64,
    /// The probe with the most negative margin, if any failed.
    pub counterexample: Option<Violation>,
    /// Largest `|sum_i T_i|` seen; must stay below the simplex tolerance.
    pub worst_mass: f64,
    pub seed: u64,
}

/// Evaluates the geometric condition at `n_samples` probes drawn by `sampler`.
///
/// Probes at vertices, edge midpoints and the barycenter come first, so any
/// `n_samples` at least as large as that list covers them.
pub fn validate_geometry<F: FieldSet + ?Sized>(
    f: &F,
    sampler: &ProbeSampler,
    n_samples: usize,
    seed: u64,
) -> Result<GeometryReport> {
    if n_samples == 0 {
        return Err(Error::Contract("validate_geometry needs n_samples >= 1".into()));
    }
    let mut report = GeometryReport {
        passed: true,
        samples: n_samples,
        failures: 0,
        worst_margin: f64::INFINITY,
        counterexample: None,
        worst_mass: 0.0,
        seed,
    };
    let mut flux = vec![0.0; sampler.strategies];
    for index in 0..n_samples {
        let (law, y) = sampler.probe(seed, index);
        f.strategy_flux(&law, &y, &mut flux);
        let mass = flux.iter().sum::<f64>().abs();
        report.worst_mass = report.worst_mass.max(mass);
        let (margin, entry) = geometric_margin(f, &law, &y);
        let failed = margin < -SIMPLEX_TOL || mass > SIMPLEX_TOL || !margin.is_finite();
        if failed {
            report.failures += 1;
            let worse = report.counterexample.as_ref().is_none_or(|v| margin < v.margin);
            if worse {
                report.counterexample = Some(Violation {
                    probe: index,
                    position: y.position.clone(),
                    strategy: y.strategy.weights().to_vec(),
                    entry,
                    margin,
                });
            }
        }
        report.worst_margin = report.worst_margin.min(margin);
    }
    report.passed = report.failures == 0;
    Ok(report)
}

/// Empirical lower bounds on the Lipschitz constants of `(v, sigma, T)`.
///
/// Each pair contributes `|f(S1, y1) - f(S2, y2)| / (|y1 - y2| + W1(S1, S2))`
/// with the Euclidean norm for `v`, the Frobenius norm for `sigma` and the BL
/// norm for `T`. Pairs with a zero denominator are skipped. The estimates are
/// running maxima over a prefix-stable pair sequence, hence nondecreasing in
/// `n_pairs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub drift: f64,
    pub diffusion: f64,
    pub flux: f64,
    pub pairs: usize,
    pub skipped: usize,
    pub seed: u64,
    pub declared: Option<LipschitzConstants>,
    /// Names of declared constants that the estimate exceeds.
    pub exceeded: Vec<String>,
}

pub fn estimate_lipschitz<F: FieldSet + ?Sized>(
    f: &F,
    sampler: &ProbeSampler,
    space: &PureStrategySpace,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if n_pairs < 2 {
        return Err(Error::Contract("estimate_lipschitz needs n_pairs >= 2".into()));
    }
    if space.len() != sampler.strategies {
        return Err(Error::input("strategy space does not match the probe sampler"));
    }
    let d = sampler.dim;
    let m = f.noise_dim(d);
    let mut est = LipschitzEstimate {
        drift: 0.0,
        diffusion: 0.0,
        flux: 0.0,
        pairs: n_pairs,
        skipped: 0,
        seed,
        declared: f.declared_lipschitz(),
        exceeded: Vec::new(),
    };
    let (mut v1, mut v2) = (vec![0.0; d], vec![0.0; d]);
    let (mut s1, mut s2) = (vec![0.0; d * m], vec![0.0; d * m]);
    let (mut t1, mut t2) = (vec![0.0; space.len()], vec![0.0; space.len()]);
    for index in 0..n_pairs {
        let ((e1, y1), (e2, y2)) = sampler.pair(seed, index);
        let law_gap = if sampler.share_ensemble { 0.0 } else { w_product(1, &e1, &e2, space)? };
        let denom = state_norm(&y1, &y2, space)? + law_gap;
        if !(denom > 0.0) {
            est.skipped += 1;
            continue;
        }
        f.drift(&e1, &y1, &mut v1);
        f.drift(&e2, &y2, &mut v2);
        f.diffusion(&e1, &y1, &mut s1);
        f.diffusion(&e2, &y2, &mut s2);
        f.strategy_flux(&e1, &y1, &mut t1);
        f.strategy_flux(&e2, &y2, &mut t2);
        est.drift = est.drift.max(euclid(&v1, &v2) / denom);
        est.diffusion = est.diffusion.max(euclid(&s1, &s2) / denom);
        est.flux = est.flux.max(bl_distance(space, &t1, &t2) / denom);
    }
    if let Some(l) = est.declared {
        for (name, got, declared) in
            [("drift", est.drift, l.drift), ("diffusion", est.diffusion, l.diffusion), ("flux", est.flux, l.flux)]
        {
            if got > declared {
                est.exceeded.push(name.to_string());
            }
        }
    }
    Ok(est)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
