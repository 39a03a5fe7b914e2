use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("eigensolver failed to converge on a {n}x{n} matrix\n{dump}")]
    NoConvergence { n: usize, dump: String },

    #[error("energy {energy} is within {tol:e} of eigenvalue {eigenvalue}")]
    Resonance {
        energy: f64,
        eigenvalue: f64,
        tol: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("cost guard: {requested} sub-ball eigensolves exceed the limit of {limit}")]
    CostGuard { requested: usize, limit: usize },

    #[error("eigensolve budget of {budget} exhausted")]
    BudgetExceeded { budget: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Record(String),

    #[error("parameter validation failed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    ParamViolations(Vec<crate::scaling::ParamViolation>),
}
