use thiserror::Error;

/// Errors raised across the library. One enum for the whole crate keeps the
/// episode loop and the harness free of conversion boilerplate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SspError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("policy is not proper: {0}")]
    NonProperPolicy(String),

    #[error("no proper policy exists: {0}")]
    NoProperPolicy(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("episode exceeded {0} steps")]
    EpisodeOverflow(usize),

    #[error("feedback mismatch: {0}")]
    FeedbackMismatch(String),

    #[error("infeasible confidence row: {0}")]
    InfeasibleRow(String),

    #[error("extended value iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("dilation too large: (1 + rho) * gamma = {0} >= 1")]
    DilationTooLarge(f64),

    #[error("schedule violation: {0}")]
    ScheduleViolation(String),

    #[error("instance generation failed: {0}")]
    GenerationFailure(String),

    #[error("costs for episode {0} were already revealed")]
    DoubleReveal(usize),

    #[error("episode protocol: {0}")]
    Protocol(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for SspError {
    fn from(e: std::io::Error) -> Self {
        SspError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SspError>;
