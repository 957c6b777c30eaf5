use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what}: dimension mismatch (expected {expected}, found {found})")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{matrix}: non-finite value at row {row}, column {col}")]
    NonFinite {
        matrix: &'static str,
        row: usize,
        col: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate lambda path: {0}")]
    DegeneratePath(String),

    #[error("solver did not converge at lambda = {lambda:.6e} after {iterations} sweeps")]
    NotConverged { lambda: f64, iterations: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rho = {rho}: {source}")]
    Rho {
        rho: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn in_fold(self, fold: usize) -> Self {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_rho(self, rho: f64) -> Self {
        Error::Rho {
            rho,
            source: Box::new(self),
        }
    }
}
