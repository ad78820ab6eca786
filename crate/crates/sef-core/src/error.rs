use thiserror::Error;

/// Crate-wide error type. Variants map one-to-one onto the failure
/// classes callers are expected to branch on (and onto CLI exit codes).
#[derive(Error, Debug)]
pub enum Error {
    #[error("merkle root of an empty transaction list is undefined")]
    EmptyPayload,

    #[error("no candidate header chain passed validation")]
    NoValidChain,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("epoch not finalized: needs chain height {needed}, have {height}")]
    NotFinalized { needed: usize, height: usize },

    #[error("insufficient droplets to decode epoch {epoch}")]
    InsufficientDroplets { epoch: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }
}
