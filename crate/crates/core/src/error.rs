use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid CSR structure: {0}")]
    InvalidCsr(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schedule cannot be executed on this problem: {0}")]
    InvalidSchedule(String),

    #[error("dense oracle limited to n <= {limit}, got n = {n}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("correctness check failed for {variant}: relative error {rel_error:e} > {tolerance:e}")]
    Correctness {
        variant: String,
        rel_error: f64,
        tolerance: f64,
    },

    #[error("failed to build worker pool: {0}")]
    Pool(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
