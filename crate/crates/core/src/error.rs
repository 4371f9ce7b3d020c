use thiserror::Error;

use crate::resolvent::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature, root finder or linear solver failed to deliver.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Non-finite value produced while evaluating problem data.
    #[error("non-finite value {value} from {what} at {location}")]
    NonFinite {
        what: String,
        location: String,
        value: f64,
    },

    /// A run cannot be configured as requested (box too small, no admissible parameter, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Fields living on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("Newton stagnated after {iterations} iterations (residual {last_residual:.3e})")]
    SolverStagnation {
        iterations: usize,
        last_residual: f64,
        history: Vec<f64>,
    },

    #[error("positivity violated: min value {min_value:.3e} at cell {cell} (lambda {lambda:.3e}); retry with a smaller step")]
    PositivityViolation {
        min_value: f64,
        cell: usize,
        lambda: f64,
    },

    #[error("particle {particle} left the box by {overshoot:.3e} (> one cell) in a single step; reduce dt")]
    StepSize { particle: usize, overshoot: f64 },

    /// A time-stepping run failed part way; the steps completed so far are attached.
    #[error("evolution aborted at step {step}: {source}")]
    Evolve {
        step: usize,
        partial: Box<Trajectory>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn non_finite(what: &str, location: impl std::fmt::Display, value: f64) -> Self {
        Error::NonFinite {
            what: what.to_string(),
            location: location.to_string(),
            value,
        }
    }
}
