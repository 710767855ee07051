use thiserror::Error;

/// Errors raised by analysis, optimization and simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bad parameters: {0}")]
    BadParams(String),

    /// Gaussian elimination met a pivot whose magnitude fell below the
    /// singularity threshold.
    #[error("singular linear system: pivot {pivot:e} in column {column} of a {dim}x{dim} system")]
    SingularSystem {
        dim: usize,
        column: usize,
        pivot: f64,
    },

    #[error("scenario cannot be realized: {0}")]
    ScenarioUnsatisfiable(String),

    /// A critical phase exceeded the configured slot budget without the
    /// critical traffic completing (e.g. `r = 1` with colliding normal users).
    #[error("critical phase stalled after {slots} slots in round {round}")]
    Stalled { round: u64, slots: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
