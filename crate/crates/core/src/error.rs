use thiserror::Error;

use crate::state::Ensemble;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or mismatched input (dimensions, non-finite values, empty sets).
    #[error("invalid input: {0}")]
    Input(String),

    /// A documented precondition of an operation was broken by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// `lambda + theta * flux` left the simplex by more than the tolerance.
    #[error("geometric condition violated: entry {entry} of lambda + theta*flux is {value:e} (position {position:?}, strategy {strategy:?})")]
    Geometry {
        position: Vec<f64>,
        strategy: Vec<f64>,
        entry: usize,
        value: f64,
    },

    /// A position became non-finite. Carries the last finite ensemble when available.
    #[error("numerical divergence at agent {agent}, step {step}")]
    Divergence {
        agent: usize,
        step: usize,
        last_finite: Option<Box<Ensemble>>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// A solver reached a state that its invariants rule out.
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Short machine-readable tag, used by the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Contract(_) => "contract",
            Error::Geometry { .. } => "geometry",
            Error::Divergence { .. } => "divergence",
            Error::Config(_) => "config",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
