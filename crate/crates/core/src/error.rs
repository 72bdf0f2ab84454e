use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance matrix is not positive definite after eigenvalue flooring")]
    SingularCovariance,

    #[error("a class has zero total weight")]
    EmptyClass,

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("label column has more than two distinct values: {values:?}")]
    MoreThanTwoClasses { values: Vec<String> },

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },

    #[error("could not draw a labeled subset containing both classes after {attempts} attempts")]
    CannotStratify { attempts: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
