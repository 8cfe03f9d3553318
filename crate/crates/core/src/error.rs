use thiserror::Error;

/// Errors produced by the numeraire-lab library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}, column {column}: {message}")]
    Data {
        line: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no data rows")]
    NoData,

    #[error("unknown asset `{0}`")]
    UnknownAsset(String),

    #[error("alignment error for {asset}: {message}")]
    Alignment { asset: String, message: String },

    #[error("pair {a}/{b}: {message}")]
    InsufficientPair {
        a: String,
        b: String,
        message: String,
    },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate asset {asset}: {message}")]
    DegenerateAsset { asset: String, message: String },

    #[error("numerical consistency error: {0}")]
    Numerical(String),

    #[error("matrix is not positive definite (pivot {pivot} at {asset})")]
    NotPositiveDefinite { asset: String, pivot: f64 },

    #[error("ill-conditioned matrix (condition estimate {condition:e}); most pegged pair {a}/{b}")]
    IllConditioned {
        condition: f64,
        a: String,
        b: String,
    },

    #[error("coverage error: no admissible numeraire for pair {a}/{b}")]
    Coverage { a: String, b: String },

    #[error("insufficient sample: {0}")]
    StatisticalPower(String),

    #[error("usage error: {0}")]
    Usage(String),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. }
            | Error::Data { .. }
            | Error::Schema(_)
            | Error::NoData
            | Error::UnknownAsset(_)
            | Error::Alignment { .. }
            | Error::Usage(_)
            | Error::Precondition(_)
            | Error::Coverage { .. } => ErrorClass::Input,
            Error::InsufficientPair { .. }
            | Error::Structure(_)
            | Error::Domain(_)
            | Error::DegenerateAsset { .. }
            | Error::Numerical(_)
            | Error::NotPositiveDefinite { .. }
            | Error::IllConditioned { .. }
            | Error::StatisticalPower(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
