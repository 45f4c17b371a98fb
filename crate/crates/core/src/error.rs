//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for domain violations, numerical failures, configuration
/// problems, and I/O.
///
/// Functions that merely evaluate a closed-form expression panic on broken
/// invariants (programmer error); functions whose failure is a legitimate
/// runtime outcome (degenerate inputs, infeasible schedules, solver
/// non-convergence, bad config files) return `Err`.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its mathematical domain.
    #[error("domain error in {context}: {message}")]
    Domain { context: &'static str, message: String },

    /// Two inputs that must agree in length do not.
    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch { context: &'static str, left: usize, right: usize },

    /// A selection mask or device set that must be non-empty is empty.
    #[error("empty selection in {context}")]
    EmptySelection { context: &'static str },

    /// All devices deactivated under channel inversion.
    #[error("channel inversion deactivated every device in round {round}")]
    AllDeactivated { round: usize },

    /// Update statistics degenerate: every selected device produced a
    /// constant, identical update, so the normalization scale is zero.
    #[error("degenerate update statistics: global standard deviation is zero")]
    DegenerateStats,

    /// An iterative solver failed to meet its tolerance within its budget.
    #[error("{solver} did not converge: {message}")]
    NoConvergence { solver: &'static str, message: String },

    /// A non-IID partition schedule cannot be satisfied.
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    /// Configuration file or flag validation failure.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem failure while reading inputs or writing results.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(context: &'static str, message: impl Into<String>) -> Self {
        Error::Domain { context, message: message.into() }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
