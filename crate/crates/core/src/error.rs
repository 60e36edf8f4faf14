//! Crate-wide error type.

/// Errors surfaced by the modelling, generation, extraction, fitting and
/// separation stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or state (bad quantum numbers, negative amplitude,
    /// non-positive energy, malformed grid, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A delay axis that cannot support the requested frequency analysis.
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),

    /// Two grids that must share axes do not.
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    /// A quantity whose phase is requested has zero oscillation amplitude.
    #[error("undefined phase: {0}")]
    UndefinedPhase(String),

    /// The optimizer failed to converge from every start.
    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    /// A parameter carries no curvature in the data and cannot be estimated.
    #[error("unidentifiable parameter: {0}")]
    Unidentifiable(String),

    /// The phase gauge is not in the state an operation requires.
    #[error("gauge error: {0}")]
    Gauge(String),

    /// A required input product is missing.
    #[error("missing dependency: {0}")]
    MissingDependency(String),

    /// Malformed file content.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
