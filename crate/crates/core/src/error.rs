use crate::multi_index::MultiIndex;
use crate::sim::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("population cap of {cap} particles exceeded before t = {time}")]
    PopulationCapExceeded {
        cap: usize,
        time: f64,
        /// Snapshots completed before the cap was hit.
        partial: Box<Trajectory>,
    },

    #[error("no limit estimate for multi-index {0}")]
    MissingLimit(MultiIndex),

    #[error("degenerate time grid: {0}")]
    DegenerateGrid(String),

    #[error("malformed snapshot file: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
