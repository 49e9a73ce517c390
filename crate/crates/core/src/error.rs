use std::path::PathBuf;

use crate::trainer::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("training error at step {step}: {message}")]
    Training { step: u64, message: String },

    #[error("chat client error: {0}")]
    Client(String),

    #[error("chat endpoint returned an empty completion")]
    DegenerateResponse,

    #[error("requirement does not name a task type: {0:?}")]
    UnrecognizedRequirement(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("{}: row {row}, column {column}: {message}", path.display())]
    Ingestion {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("training diverged at epoch {epoch}; last good checkpoint from epoch {}", .checkpoint.epoch)]
    Diverged {
        epoch: usize,
        checkpoint: Box<Checkpoint>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
