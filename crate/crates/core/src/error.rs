use thiserror::Error;

/// Errors produced by the decomposition, training and generation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("unsupported scheme: {0}")]
    Unsupported(String),

    #[error(
        "binary search did not converge within {iterations} iterations (interval width {width})"
    )]
    NoConvergence { iterations: usize, width: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("{} sample(s) failed, first at index {}: {}", .0.len(), .0[0].0, .0[0].1)]
    Batch(Vec<(usize, Error)>),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
