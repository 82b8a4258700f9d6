use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants split into two families that the CLI maps to distinct exit codes:
/// contract violations (bad inputs) and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("hole overlap between holes {first} and {second} (center distance {distance:.6} nm < {min_distance:.6} nm)")]
    HoleOverlap {
        first: usize,
        second: usize,
        distance: f64,
        min_distance: f64,
    },

    #[error("FDTD instability at step {step}: |field| = {magnitude:e} exceeds {limit:e}")]
    Unstable {
        step: usize,
        magnitude: f64,
        limit: f64,
    },

    #[error("singular normal matrix: parameters `{first}` and `{second}` are degenerate")]
    SingularNormalMatrix { first: String, second: String },

    #[error("no peak found: {0}")]
    NoPeak(String),

    #[error("no decay in data: {0}")]
    NoDecay(String),

    #[error("missing decay component: {0}")]
    MissingComponent(String),

    #[error("field is identically zero")]
    ZeroField,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics themselves (instability,
    /// non-convergence, singular systems) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Unstable { .. } | Error::SingularNormalMatrix { .. } | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
