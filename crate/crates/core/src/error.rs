use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("eigenvalue {modulus} does not exceed 1 (not an expanding matrix)")]
    EigenvalueNotExpanding { modulus: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("scan window exhausted: {0}")]
    WindowExhausted(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("dilation is not normalized: ||A^-1|| = {0} > 1/2")]
    NotNormalized(f64),
    #[error("invalid input: {0}")]
    InputInvalid(String),
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
