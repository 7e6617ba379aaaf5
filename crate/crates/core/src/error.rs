use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("complete domain has {q} points, exceeding the cap of {cap}")]
    DomainTooLarge { q: u128, cap: usize },

    #[error("point {point:?} is not in the {kind} domain")]
    PointOutsideDomain { point: Vec<u32>, kind: &'static str },

    #[error("unknown variable {0}")]
    UnknownVariable(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("inconsistent joint distributions: {0}")]
    Consistency(String),

    #[error("unsupported configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidHierarchy(_)
            | Error::DomainTooLarge { .. }
            | Error::Config(_)
            | Error::Validation(_) => ErrorClass::Config,
            Error::PointOutsideDomain { .. }
            | Error::UnknownVariable(_)
            | Error::Shape(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::Numerical(_) | Error::Consistency(_) => ErrorClass::Numerical,
        }
    }
}
