use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate fluid model: {0}")]
    DegenerateModel(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("singular linearization: {0}")]
    SingularLinearization(String),

    #[error("Newton stagnated after {iterations} iterations (scaled residual {residual:e})")]
    Stagnation { iterations: usize, residual: f64 },

    #[error(
        "continuation failed at (eps, eta) = ({:e}, {:e}): {reason}",
        failed.0, failed.1
    )]
    ContinuationFailed {
        /// Last accepted rung, if any.
        last_good: Option<(f64, f64)>,
        failed: (f64, f64),
        reason: String,
    },

    #[error("time step {step}: {source}")]
    TimeStep { step: usize, source: Box<Error> },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing configuration key `{0}`")]
    MissingKey(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
