use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration value.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Shapes disagree (row/column counts, state counts, grid sizes, ...).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value fell outside the range captured by a distance context,
    /// i.e. the context was built from different data.
    #[error("stale distance context: {0}")]
    StaleContext(String),

    /// A column contains no observed values, so no statistic or scale can be
    /// derived for it.
    #[error("column {0:?} has no observed values")]
    NoObservedValues(String),

    /// A requested quantity is undefined for the given input
    /// (e.g. an error average over an empty mask).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Malformed input text (schema, CSV cell, config table, ...).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
