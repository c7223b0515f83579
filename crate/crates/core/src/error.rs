use thiserror::Error;

/// Errors raised by the simulation lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix for iteration {iteration} is not column-stochastic (column {column} sums to {sum})")]
    NotColumnStochastic { iteration: usize, column: usize, sum: f64 },
    #[error("invalid noise split: {0}")]
    InvalidSplit(String),
    #[error("no party survived to the final iteration")]
    NoSurvivors,
    #[error("the honest set is empty")]
    EmptyHonestSet,
    #[error("rank precondition failed: rank {rank} < required {required}")]
    RankPrecondition { rank: usize, required: usize },
    #[error("privacy budget infeasible: {0}")]
    Infeasible(String),
    #[error("inconsistent linear system (residual {residual:e})")]
    Inconsistent { residual: f64 },
    #[error("numerical conditioning failure: {0}")]
    Conditioning(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankPrecondition { .. } | Error::Inconsistent { .. } => 3,
            Error::Conditioning(_) => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
