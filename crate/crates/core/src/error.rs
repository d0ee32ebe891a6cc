use alloc::string::String;

/// Errors raised by the solver, the filter and their inputs.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("invalid coefficients: {0}")]
    Coefficients(String),

    #[error("invalid boundary conditions: {0}")]
    Boundary(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("matrix is singular: pivot {pivot} has value {value:e}")]
    Singular { pivot: usize, value: f64 },

    #[error("matrix pattern does not match the symbolic analysis")]
    PatternMismatch,

    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("intersection constraint: {0}")]
    Constraint(String),

    #[error("invalid filter configuration: {0}")]
    FilterConfig(String),

    #[error(
        "filter divergence at step {step}: every particle has zero likelihood; \
         increase the likelihood variance or the exploration rate"
    )]
    Divergence { step: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
