use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument outside the domain of the operation (probability out of
    /// range, empty node set, mismatched payload lengths, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A model that violates the standing assumptions of the region formulas.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Malformed or unusable configuration, including simulations whose
    /// expected completion time is infinite.
    #[error("configuration error: {0}")]
    Config(String),

    /// A receiver was asked to extract a packet it cannot decode. This is
    /// always a bookkeeping bug in a policy and aborts the run.
    #[error("decode error at slot {slot}: {detail} (queues: {queues})")]
    Decode {
        slot: u64,
        detail: String,
        queues: String,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
