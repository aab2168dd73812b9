use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("node {node} out of range for a universe of {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("ill-conditioned kernel: {0}")]
    IllConditioned(String),

    #[error("conditional probability undefined: inclusion probability of node {node} is {value:e}")]
    UndefinedConditional { node: usize, value: f64 },

    #[error("degenerate kernel: conditional pivot {pivot:e} at node {node}")]
    DegenerateKernel { node: usize, pivot: f64 },

    #[error("subset enumeration over {n} nodes exceeds the limit of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("non-finite determinant for edge #{index}")]
    NonFiniteDeterminant { index: usize },

    #[error("fit failed: all {starts} starts produced a non-finite objective")]
    FitFailed { starts: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::IllConditioned(_)
            | Error::UndefinedConditional { .. }
            | Error::DegenerateKernel { .. }
            | Error::NonFiniteDeterminant { .. }
            | Error::FitFailed { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
