use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("truncation mismatch: {0} vs {1}")]
    TruncationMismatch(usize, usize),
    #[error("singular block at mode {0}")]
    SingularBlock(i64),
    #[error("non-hermitian block at mode {0}")]
    NonHermitian(i64),
    #[error("not a symbol-plus-trace-class operator")]
    NotTraceClassPerturbation,
    #[error("insufficient truncation")]
    InsufficientTruncation,
    #[error("coefficient/spectrum mismatch")]
    CoefficientMismatch,
    #[error("framing not generic")]
    FramingNotGeneric,
    #[error("excluded vectors not independent")]
    DependentExclusions,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
