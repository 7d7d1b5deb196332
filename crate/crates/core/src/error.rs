use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("scenario schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failed at iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: SolveError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failure modes of the barrier solver.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolveError {
    #[error("starting point is not strictly feasible (worst constraint value {0:e})")]
    Infeasible(f64),
    #[error("newton step budget of {0} exhausted")]
    MaxIter(usize),
    #[error("linear system could not be factorized")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
