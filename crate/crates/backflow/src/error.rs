use thiserror::Error;

/// Errors raised by every layer of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("branch error: {0}")]
    Branch(String),
    #[error("precision exhausted at {digits} requested digits (achieved {achieved:?})")]
    PrecisionExhausted { digits: u32, achieved: Option<f64> },
    #[error("precision insufficient for this N: Cholesky breakdown at pivot {pivot} of {dim}")]
    CholeskyBreakdown { pivot: usize, dim: usize },
    #[error("iteration ceiling reached: {0}")]
    IterationCeiling(String),
    #[error("uncertifiable: increase element precision to at least {required_digits} digits (C_max = {c_max:e})")]
    Uncertifiable { required_digits: u32, c_max: f64 },
    #[error("cache integrity failure for key {key}: {reason}")]
    CacheIntegrity { key: String, reason: String },
    #[error("fit rejected: {0}")]
    FitRejected(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
