use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Pauli string: {0}")]
    InvalidPauli(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("state is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("invalid Hamiltonian: {0}")]
    InvalidHamiltonian(String),

    #[error("driving field is not defined at t = {0}")]
    FieldDomain(f64),

    #[error("norm drift {0:e} exceeds tolerance; increase substeps")]
    NormDrift(f64),

    #[error("trace drift {0:e} exceeds tolerance; increase substeps")]
    TraceDrift(f64),

    #[error("expectation value has imaginary part {0:e}")]
    ImaginaryExpectation(f64),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient encountered")]
    NonFiniteGradient,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("backward pass requires a forward cache")]
    MissingCache,

    #[error("model direction mismatch: expected {expected}, found {found}")]
    DirectionMismatch { expected: String, found: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NormDrift(_)
                | Error::TraceDrift(_)
                | Error::ImaginaryExpectation(_)
                | Error::Eigen(_)
                | Error::NonFiniteGradient
                | Error::Divergence { .. }
        )
    }
}
