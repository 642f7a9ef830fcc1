use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },

    #[error("loads are not admissible: pool {pool} carries load {load} (must be < 1)")]
    Inadmissible { pool: usize, load: f64 },

    #[error("{what} exceeds the configured cap ({actual} > {limit})")]
    CapExceeded { what: &'static str, limit: usize, actual: usize },

    #[error("interference graph has no vertices")]
    EmptyGraph,

    #[error("target lies outside the schedule hull (residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("no data: {0}")]
    NoData(&'static str),

    #[error("invalid transition: {0}")]
    InvalidTransition(String),

    #[error("profile mismatch: {0}")]
    ProfileMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Errors caused by bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidNetwork(_)
                | Error::DimensionMismatch { .. }
                | Error::Inadmissible { .. }
                | Error::CapExceeded { .. }
                | Error::EmptyGraph
                | Error::ProfileMismatch(_)
                | Error::Unsupported(_)
                | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
