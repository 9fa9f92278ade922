use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spin quantum number {0}: must be a non-negative multiple of 1/2")]
    InvalidSpin(f64),

    #[error("unsupported Stevens operator O_{k}^{q}; supported: O_2^0, O_4^0, O_6^0, O_4^4")]
    UnsupportedStevens { k: i32, q: i32 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("eigensolver failed to converge")]
    EigenFailure,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transition frequency must be positive (got {0} GHz)")]
    ZeroFrequency(f64),

    #[error("dipolar cutoff of {0} Å encloses no lattice sites")]
    EmptyCutoff(f64),

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:.3e}, best {best:?})")]
    NotConverged {
        iterations: usize,
        residual_norm: f64,
        best: Vec<f64>,
    },

    #[error("malformed data at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::EigenFailure | Error::NotConverged { .. })
    }
}
