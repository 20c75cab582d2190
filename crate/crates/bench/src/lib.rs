//! Experiment harness around `sbes-core`: synthetic truths with a noise
//! model, sanity baselines, the seeded batch runner with CSV output, and the
//! gradient-descent stepsize study.

pub mod baseline;
pub mod experiment;
pub mod objective;
pub mod stats;
pub mod stepsize;

pub use experiment::{run_experiment, write_outputs, ExperimentConfig, ExperimentOutput, PolicyKind, RunRecord};
pub use objective::{make_objective, noisy_eval, NoiseSpec, Objective};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] sbes_core::Error),
    #[error("unknown objective `{0}`")]
    UnknownObjective(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{0}")]
    Io(String),
    #[error("could not sample an initial point: {0}")]
    Sampling(String),
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
