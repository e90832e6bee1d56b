use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("absolute continuity fails: {0}")]
    AbsoluteContinuity(String),

    #[error("function is not integrable on (0, 1]: {0}")]
    NonIntegrable(String),

    #[error("enumeration needs {cells} cells, above the cap of {cap}; use the Monte Carlo path")]
    CapExceeded { cells: u128, cap: u128 },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid process: {0}")]
    InvalidProcess(String),

    #[error("subgaussian constant unavailable: the problem declares no loss bound and no explicit sigma")]
    SigmaRequired,

    #[error("chain construction violated: {0}")]
    Chain(String),

    #[error("transport solver failed: {0}")]
    Solver(String),
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>) -> Self {
        Error::Dimension(what.into())
    }
}
