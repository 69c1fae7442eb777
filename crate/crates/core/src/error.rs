use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid goal space: {0}")]
    InvalidGoalSpace(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("concentration beta = {beta} outside [0, {max}]")]
    BetaOutOfRange { beta: f64, max: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("goal index {index} out of range for {n_goals} goals")]
    GoalOutOfRange { index: usize, n_goals: usize },
    #[error("invalid epsilon grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("brute-force grid too large: {n_goals} goals (limit {limit})")]
    GridTooLarge { n_goals: usize, limit: usize },
    #[error("empty effective batch ({skipped} trajectories skipped)")]
    EmptyBatch { skipped: usize },
    #[error("rejection sampling stalled at epsilon {epsilon}: acceptance rate {rate:.2e} below {floor:.0e}")]
    RejectionStalled { epsilon: f64, rate: f64, floor: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("chart error: {0}")]
    Chart(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
