use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at step {step} of trajectory {trajectory}: {what}")]
    NonFinite { trajectory: u64, step: usize, what: String },

    #[error("training diverged at epoch {epoch}, batch {batch} (member {member}): loss = {loss}")]
    Diverged {
        member: usize,
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset has no trajectory-start records")]
    NoEpisodeStarts,

    #[error("{path}: record {record} (line {line}): {message}")]
    Format {
        path: PathBuf,
        record: usize,
        line: usize,
        message: String,
    },

    #[error("{path}: incompatible file version {found} (expected {expected})")]
    Version { path: PathBuf, found: u64, expected: u64 },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("io error on {path}: {source}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
