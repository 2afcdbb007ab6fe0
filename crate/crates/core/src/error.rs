use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{field} must be finite")]
    NonFinite { field: &'static str },
    #[error("{field} = {value}: {bound}")]
    Constraint {
        field: &'static str,
        value: f64,
        bound: &'static str,
    },
    #[error("{what}: expected {expected} entries, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("priors must be listed in non-increasing order")]
    PriorOrder,
    #[error("agent {agent}: unbounded cutoff requires a prior of exactly 1")]
    UnboundedCutoff { agent: usize },
}

/// Failures of the simulation, verification and search layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scale limit exceeded: {0}")]
    ScaleLimit(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = CascadeError> = std::result::Result<T, E>;
