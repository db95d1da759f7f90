use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("unsupported quadrature degree {0} (supported: 2, 5, 10)")]
    UnsupportedDegree(usize),

    #[error("invalid problem parameters: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("iteration limit reached after {iterations} iterations (best relative residual {best_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        best_residual: f64,
    },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("N = {n}: {source}")]
    AtResolution {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error (possibly wrapped with a resolution) is a solver
    /// iteration failure.
    pub fn is_non_convergence(&self) -> bool {
        match self {
            Error::NonConvergence { .. } => true,
            Error::AtResolution { source, .. } => source.is_non_convergence(),
            _ => false,
        }
    }
}
