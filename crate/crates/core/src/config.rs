//! Experiment configuration files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "space": {"labels": ["leader", "follower"], "dist": [[0, 1], [1, 0]]},
//!   "field": {"variant": "leader_follower", "params": {"attraction": 1.0}},
//!   "theta": 0.5,
//!   "sim": {"agents": 64, "horizon": 1.0, "steps": 200},
//!   "init": {"position": {"mean": [0.0], "std": 1.0}, "strategy": {"kind": "uniform"}},
//!   "experiment": {"kind": "simulate"},
//!   "seed": 42
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::SimConfig;
use crate::error::{Error, Result};
use crate::fields::{BuiltinField, FieldSpec, LipschitzConstants};
use crate::sampler::{InitSampler, ProbeSampler};
use crate::strategy::PureStrategySpace;

pub const SCHEMA_VERSION: u32 = 1;

fn default_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    20
}

fn default_reps() -> usize {
    64
}

fn default_samples() -> usize {
    10_000
}

fn default_pairs() -> usize {
    1_000
}

fn default_n_grid() -> Vec<usize> {
    vec![8, 16, 32, 64, 128]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Simulate,
    Meanfield {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Chaos {
        #[serde(default = "default_n_grid")]
        n_grid: Vec<usize>,
        #[serde(default = "default_reps")]
        reps: usize,
        /// Paths in the mean-field reference law; defaults to `4 * max N`.
        #[serde(default)]
        law_size: Option<usize>,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Validate {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_pairs")]
        pairs: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub space: PureStrategySpace,
    pub field: FieldSpec,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<LipschitzConstants>,
    pub sim: SimConfig,
    pub init: InitSampler,
    pub experiment: Experiment,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Parses and validates a config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The field, with structural checks only.
    pub fn build_field(&self) -> Result<BuiltinField> {
        Ok(BuiltinField::new(self.field.clone(), self.theta, self.space.len())?.with_declared_lipschitz(self.lipschitz))
    }

    /// Simulation settings with the top-level seed filled in.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig { seed: self.seed, ..self.sim.clone() }
    }

    pub fn probe_sampler(&self) -> ProbeSampler {
        ProbeSampler::new(self.init.dim(), self.space.len())
    }

    /// Checks everything that parsing does not. Range checks on field
    /// parameters are skipped for `validate` experiments, which exist to
    /// examine fields that may break them.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.init.validate(self.space.len())?;
        let field = self.build_field()?;
        if let Some(d) = field.required_dim() {
            if d != self.init.dim() {
                return Err(Error::Config(format!(
                    "field needs position dimension {d}, init.position.mean has {}",
                    self.init.dim()
                )));
            }
        }
        self.sim.validate(self.theta)?;
        match &self.experiment {
            Experiment::Validate { samples, pairs } => {
                if *samples == 0 || *pairs < 2 {
                    return Err(Error::Config("validate needs samples >= 1 and pairs >= 2".into()));
                }
            }
            other => {
                field.check_ranges()?;
                if let Experiment::Meanfield { tol, max_iter } | Experiment::Chaos { tol, max_iter, .. } = other {
                    if !(*tol > 0.0) || *max_iter == 0 {
                        return Err(Error::Config("need tol > 0 and max_iter >= 1".into()));
                    }
                }
                if let Experiment::Chaos { n_grid, reps, law_size, .. } = other {
                    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Config("n_grid must be positive and strictly increasing".into()));
                    }
                    if *reps == 0 || *law_size == Some(0) {
                        return Err(Error::Config("reps and law_size must be positive".into()));
                    }
                }
            }
        }
        Ok(())
    }
}
