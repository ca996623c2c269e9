//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// An operation received an empty collection it cannot handle.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Invalid parameter combination or configuration document.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Exhaustive robustness checking is limited to small graphs.
    #[error("graph has {nodes} nodes; exhaustive robustness check is limited to {limit} (use a construction certificate instead)")]
    SizeLimit { nodes: usize, limit: usize },

    /// Required state (e.g. an auxiliary vector) is missing or inconsistent.
    #[error("state error: {0}")]
    State(String),

    /// A floating-point computation failed to reach the required residual.
    #[error("numerical failure: {context} (residual {residual:.3e})")]
    Numerical { context: String, residual: f64 },

    /// Iterative minimization did not reach the gradient tolerance.
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    Convergence { iterations: usize, gradient_norm: f64 },

    /// Argument outside the closed-form formula's domain.
    #[error("domain violation: {0}")]
    Domain(String),

    /// Geometric-rate fitting could not be performed on the series.
    #[error("rate fit failed: {0}")]
    Fit(String),

    /// A run produced a non-finite coordinate.
    #[error("non-finite state at round {round} (agent {agent})")]
    Divergence { round: usize, agent: usize },

    /// A text document (edge list, ensemble, certificate, CSV) is malformed.
    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
