use std::fmt::Display;
use std::path::PathBuf;

/// Failure of a run, mapped onto the process exit code by [`RunError::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("seed {seed}: population cap of {cap} particles exceeded before t = {time}")]
    PopulationCap { seed: u64, cap: usize, time: f64 },

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: bbm_core::Error,
    },

    #[error(transparent)]
    Core(#[from] bbm_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn config(field: &'static str, reason: impl Display) -> Self {
        RunError::Config { field, reason: reason.to_string() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunError {
        let path = path.into();
        move |source| RunError::Io { path, source }
    }

    /// Attaches the seed to an error raised while processing it.
    pub(crate) fn from_seed(seed: u64, error: bbm_core::Error) -> Self {
        match error {
            bbm_core::Error::PopulationCapExceeded { cap, time, .. } => RunError::PopulationCap { seed, cap, time },
            source => RunError::Seed { seed, source },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::PopulationCap { .. } => 3,
            _ => 1,
        }
    }
}
