use thiserror::Error;

use crate::trace::RunTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range (limit {limit})")]
    Index { index: usize, limit: usize },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// The run was stopped by its budget before finishing; the partial trace is kept.
    #[error("budget exhausted after {} records", .0.records.len())]
    BudgetExhausted(Box<RunTrace>),

    /// Consensus ran out of rounds; carries the last node state and rounds spent.
    #[error("consensus budget of {rounds} rounds exhausted (error ratio {ratio:.3e})")]
    ConsensusBudget {
        rounds: usize,
        ratio: f64,
        state: Box<nalgebra::DMatrix<f64>>,
    },

    #[error("divergence detected at round {round}")]
    Divergence { round: u64, trace: Box<RunTrace> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
