use std::path::PathBuf;

use crate::grid::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),

    #[error("map generation failed: non-finite value {value} at cell ({}, {})", cell.x, cell.y)]
    NonFiniteValue { cell: Cell, value: f64 },

    #[error("range-of-motion trace needs at least 3 points, got {0}")]
    TraceTooShort(usize),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("malformed PGM: {0}")]
    Pgm(String),

    #[error("malformed spring map file: {0}")]
    SpringFile(String),

    #[error("non-finite force input ({x}, {y})")]
    NonFiniteForce { x: f64, y: f64 },

    #[error("stale map: {0}")]
    StaleMap(String),

    #[error("{path}: {source}")]
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
