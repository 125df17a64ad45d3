use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Machine-readable failure class, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    ConfigInvalid,
    SymmetryViolation,
    Meshing,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn code(self) -> i32 {
        match self {
            ErrorCategory::ConfigInvalid => 2,
            ErrorCategory::SymmetryViolation => 3,
            ErrorCategory::Meshing => 4,
            ErrorCategory::Numerical => 5,
            ErrorCategory::Io => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::ConfigInvalid => "config-invalid",
            ErrorCategory::SymmetryViolation => "symmetry-violation",
            ErrorCategory::Meshing => "meshing",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symmetry violation: {0}")]
    SymmetryViolation(String),

    #[error("equivariance violation: {0}")]
    EquivarianceViolation(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("|t| = {t} exceeds the injectivity bound t_max = {t_max}")]
    Injectivity { t: f64, t_max: f64 },

    #[error("meshing failed: {0}")]
    Meshing(String),

    #[error("transport failed: {0}")]
    Transport(String),

    #[error("degenerate triangle {index} (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unreliable input: {0}")]
    UnreliableInput(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("branch tracking failed at t = {t}: {message}")]
    Tracking { t: f64, message: String },

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::ConfigInvalid(_) | Error::InvalidParameter(_) => ErrorCategory::ConfigInvalid,
            Error::SymmetryViolation(_) | Error::EquivarianceViolation(_) => {
                ErrorCategory::SymmetryViolation
            }
            Error::Geometry(_) | Error::Meshing(_) | Error::Transport(_) | Error::Injectivity { .. } => {
                ErrorCategory::Meshing
            }
            Error::Io(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }
}
