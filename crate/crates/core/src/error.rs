use std::path::PathBuf;

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot schedule event at {at}: clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("rtt sample must be positive")]
    NonPositiveRttSample,

    #[error("header too short: {0} bytes, need 16")]
    HeaderTooShort(usize),

    #[error("unsupported header version {0}")]
    HeaderVersion(u8),

    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("failed to parse scenario: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
