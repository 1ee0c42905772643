use thiserror::Error;

/// Errors raised by the quadrature library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight parameters: {0}")]
    Parameter(String),

    #[error("cannot parse weight spec `{input}`: {reason}; accepted forms are {GRAMMAR}")]
    Parse { input: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver did not converge after {iterations} iterations (residuals {residual1:e}, {residual2:e})")]
    NoConvergence {
        iterations: usize,
        residual1: f64,
        residual2: f64,
    },

    #[error("recurrence lost positivity at degree {degree} with {digits} working digits; raise the precision")]
    Precision { degree: usize, digits: u32 },

    #[error("tolerance not reached: best estimate {value:e} with error estimate {error:e} after {panels} panels")]
    Accuracy { value: f64, error: f64, panels: usize },

    #[error("orthonormality defect {defect:e} exceeds {limit:e}; refine the discretization")]
    Orthonormality { defect: f64, limit: f64 },

    #[error("degree {degree} exceeds the recurrence table size {max}")]
    Degree { degree: usize, max: usize },

    #[error("non-finite input: {0}")]
    Input(String),

    #[error("eigenvalue solver failed for order {0}")]
    Eigen(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Accepted weight spec forms, quoted in parse errors.
pub const GRAMMAR: &str = "`freud:alpha=<r>,beta=<r>`, `iterexp:l=<i>,k=<i>,alpha=<r>,beta=<r>`, `pollaczek:alpha=<r>,beta=<r>`";

pub type Result<T> = std::result::Result<T, Error>;
