use thiserror::Error;

/// Errors raised by the numerical and modelling routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported quadrature order {0} (expected 2..=256)")]
    UnsupportedOrder(usize),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("optimization failure: {0}")]
    Optimization(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("support mismatch: left has n={left}, right has n={right}")]
    SupportMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unreachable variance ratio {target} (supremum {sup})")]
    UnreachableRatio { target: f64, sup: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid record at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
