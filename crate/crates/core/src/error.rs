use thiserror::Error;

/// Errors produced by the key-rate pipeline and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A concentration-bound query violated its preconditions.
    #[error("invalid concentration query: {0}")]
    InvalidQuery(String),

    /// An argument fell outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear program was built with a constraint whose lower side exceeds its upper side.
    #[error("infeasible LP construction: {0}")]
    InfeasibleConstruction(String),

    /// The simplex solver found no feasible point.
    #[error("linear program is infeasible")]
    Infeasible,

    /// The simplex solver found an unbounded direction. Box-bounded programs never do.
    #[error("internal error: linear program reported unbounded")]
    Unbounded,

    /// The simplex solver hit its iteration limit or lost numerical stability.
    #[error("numerical failure in LP solver: {0}")]
    Numerical(String),

    /// A configuration value is missing or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
