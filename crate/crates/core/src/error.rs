use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("trial {trial} diverged at step {step}")]
    Diverged { trial: u64, step: usize },

    #[error("numerical instability: {0}")]
    Numerical(String),

    #[error("no steady state: {0}")]
    NoSteadyState(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("no nonzero differences between paired samples")]
    NoNonzeroDifferences,

    #[error("every candidate was rejected in iteration {0}")]
    AllCandidatesRejected(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
