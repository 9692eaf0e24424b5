use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by the whole crate.
///
/// The CLI maps every variant to an exit class: configuration and input
/// problems are usage errors (exit 2), anything that goes wrong while
/// iterating or analyzing is an engine error (exit 3). Failing *checks* are
/// not errors; they are reported as verdicts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dense dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("projection is not available for the `{kind}` domain")]
    UnsupportedProjection { kind: &'static str },

    #[error("iterate left the domain at step {step}: distance {distance:.3e} exceeds {tol:.3e}")]
    DomainEscape { step: usize, distance: f64, tol: f64 },

    #[error(
        "stage {stage}: inner iteration still above tolerance {tol:.3e} after {max_iter} steps \
         (last step norm {last_step:.3e})"
    )]
    NonConvergence { stage: usize, max_iter: usize, tol: f64, last_step: f64 },

    #[error("insufficient data: need at least {needed} entries, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("point is outside Lambda: tail variation {variation:.3e} exceeds tolerance {tol:.3e}")]
    NotInLambda { variation: f64, tol: f64 },

    #[error("unknown case `{key}`; available cases: {available}")]
    UnknownCase { key: String, available: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("trace format error: {0}")]
    TraceFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    /// Exit class for the CLI: 2 for bad input, 3 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Validation { .. }
            | Error::Parse(_)
            | Error::TraceFormat(_)
            | Error::UnknownCase { .. } => 2,
            _ => 3,
        }
    }
}
