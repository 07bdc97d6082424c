//! Simulation and verification toolkit for interacting agents that carry a
//! spatial position and a mixed strategy over a finite set of pure strategies.
//!
//! The crate solves the N-agent system
//!
//! ```text
//! dX_i = v(S_N; X_i, L_i) dt + sigma(S_N; X_i, L_i) dB_i,    dL_i = T(S_N; X_i, L_i) dt
//! ```
//!
//! where `S_N` is the empirical measure of the agents, approximates its
//! mean-field limit by fixed-point iteration on laws ([`meanfield`]), and
//! measures the gap between the two under synchronous coupling ([`chaos`]).

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod fields;
pub mod meanfield;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod state;
pub mod strategy;
pub mod transport;

pub use error::{Error, Result};
pub use state::{AgentState, Ensemble, TrajectoryBundle};
pub use strategy::{MixedStrategy, PureStrategySpace, ZeroMassMeasure};

/// Order-preserving parallel map; runs on the current rayon pool when the
/// `parallel` feature is on, sequentially otherwise. Results never depend on
/// the number of workers.
pub(crate) mod par {
    #[cfg(feature = "parallel")]
    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
