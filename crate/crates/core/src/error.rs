use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric: asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("symmetric eigensolver did not converge (n = {n})")]
    EigFailure { n: usize },

    #[error("eigenvalue {eigenvalue} lies outside the domain of the matrix function")]
    DomainError { eigenvalue: f64 },

    #[error("negative eigenvalues clamped ({clamped}) while strict PSD mode is on")]
    StrictModeViolation { clamped: usize },

    #[error("path {path_index}, step {step}: {source}")]
    AtStep {
        path_index: u64,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("state became non-finite")]
    NonFinite,

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("model `{0}` has no closed-form mean")]
    MissingReference(String),

    #[error("degenerate order fit: {0}")]
    DegenerateFit(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn at_step(self, path_index: u64, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                path_index,
                step,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
