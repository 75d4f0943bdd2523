use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {field}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("segment {index} ({from} -> {to}): {message}")]
    Validation {
        index: usize,
        from: String,
        to: String,
        message: String,
    },

    #[error("configuration error in {context}: {message}")]
    Config { context: String, message: String },

    #[error("cannot read {}: {source}", path.display())]
    MissingFile {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("segment of {distance_m:.3} m cannot fit even a minimum-speed run")]
    InfeasibleSegment { distance_m: f64 },

    #[error("simulation has not finished")]
    NotFinished,

    #[error("episode already finished; call reset")]
    EpisodeFinished,

    #[error("no decision is pending")]
    NoPendingDecision,

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite loss at iteration {iteration}; offending batch written to {}", dump.display())]
    NonFiniteLoss { iteration: usize, dump: PathBuf },

    #[error("checkpoint is incompatible: {0}")]
    Incompatible(String),

    #[error("comparison refused: config hash {baseline} != {candidate}")]
    ComparisonRefused { baseline: String, candidate: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by bad inputs rather than by running them.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation { .. }
                | Error::Config { .. }
                | Error::MissingFile { .. }
                | Error::Incompatible(_)
                | Error::ComparisonRefused { .. }
        )
    }
}
