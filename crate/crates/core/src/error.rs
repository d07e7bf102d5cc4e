use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("level set for y = {level} is empty (no cell crossing found)")]
    EmptyLevelSet { level: f64 },

    #[error("implicit root solve failed for u = ({u0}, {u1})")]
    RootNotFound { u0: f64, u1: f64 },

    #[error("fixed-point inversion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("gradient norm {norm:e} too small to define a level-set curvature")]
    DegenerateGradient { norm: f64 },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: unknown arm `{value}` (expected 0 or 1)")]
    UnknownArm { line: usize, value: String },

    #[error("unsupported primitive: {0}")]
    UnsupportedPrimitive(&'static str),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// True for failures of a numerical routine (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::RootNotFound { .. }
                | Error::DegenerateGradient { .. }
                | Error::EmptyLevelSet { .. }
                | Error::TrainingAborted(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
