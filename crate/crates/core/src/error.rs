use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid hazard: {0}")]
    InvalidHazard(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// No events in the analysis sample, or no information about the
    /// treatment coefficient.
    #[error("inestimable: {0}")]
    Inestimable(&'static str),

    /// Monotone partial likelihood or Newton failure.
    #[error("Cox fit did not converge: {0}")]
    Nonconvergent(String),

    #[error("between-study variance undefined for k = {0} studies")]
    TooFewStudies(usize),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("oracle estimands unstable: {0}")]
    Unstable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
