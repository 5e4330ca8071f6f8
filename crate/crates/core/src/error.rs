use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum ClrError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("value {value} is out of range for {code} (limit {limit})")]
    OutOfRange { code: &'static str, value: u64, limit: u64 },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("capacity exceeded: {cells} lattice cells requested, budget is {budget}")]
    Capacity { cells: u128, budget: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("initialization error: {0}")]
    Init(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ClrError>;

impl ClrError {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClrError::Capacity { .. } => 3,
            ClrError::Config(_) => 1,
            _ => 2,
        }
    }
}
