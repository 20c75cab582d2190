use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain [{lo}, {hi}]")]
    InvalidDomain { lo: f64, hi: f64 },

    #[error("point {x} outside domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("curve `{label}` is not unimodal on the domain")]
    NotUnimodal { label: String },

    #[error("curves `{first}` and `{second}` share an optimizer at {x}")]
    DuplicateOptimizer { first: String, second: String, x: f64 },

    #[error("degenerate posterior update (normalizer {0:e})")]
    DegenerateUpdate(f64),

    #[error("posterior invariant violated: {0}")]
    InvalidDensity(String),

    #[error("no valid candidate point could be drawn away from the history")]
    NoValidCandidate,

    #[error("non-finite observation {value} at x = {x}")]
    NonFiniteObservation { x: f64, value: f64 },

    #[error("decision does not match state: {0}")]
    DecisionMismatch(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
