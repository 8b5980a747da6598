use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Cholesky factorization failed at every jitter level (max jitter {max_jitter:e})")]
    FactorizationFailed { max_jitter: f64 },

    #[error("{what}: value {value} outside domain{}", row_suffix(.index))]
    Domain {
        what: String,
        value: f64,
        index: Option<usize>,
    },

    #[error("warping layer {layer} has no closed-form inverse")]
    NoClosedFormInverse { layer: usize },

    #[error("numeric inverse did not converge after {iterations} iterations; best bracket [{lo}, {hi}]")]
    NoConvergence { iterations: usize, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid quadrature order {0} (expected 1..=100)")]
    InvalidOrder(usize),

    #[error("unsupported warping variant for this operation: {0}")]
    UnsupportedVariant(String),

    #[error("objective is not finite at the evaluated point")]
    NonFiniteObjective,

    #[error("optimizer failure: {0}")]
    OptimizerFailure(String),

    #[error("all {n_starts} training starts failed; first failure: {first}")]
    AllStartsFailed { n_starts: usize, first: Box<Error> },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid split: {0}")]
    InvalidSpec(String),

    #[error("empty input")]
    EmptyInput,

    #[error("io error: {0}")]
    Io(String),
}

fn row_suffix(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" (row {i})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(what: impl Into<String>, value: f64) -> Self {
        Error::Domain {
            what: what.into(),
            value,
            index: None,
        }
    }

    /// Attaches the offending data row to a domain error.
    pub fn at_row(self, row: usize) -> Self {
        match self {
            Error::Domain { what, value, .. } => Error::Domain {
                what,
                value,
                index: Some(row),
            },
            other => other,
        }
    }

    /// True when the failure stems from data outside a warping domain.
    pub fn is_domain(&self) -> bool {
        match self {
            Error::Domain { .. } => true,
            Error::AllStartsFailed { first, .. } => first.is_domain(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
