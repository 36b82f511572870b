use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or numeric parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Caller-supplied data (vectors, documents) is malformed.
    #[error("invalid input: {0}")]
    Input(String),

    /// AEAD open failed: wrong key, wrong associated data, or tampering.
    #[error("payload authentication failed{}", .record.map(|id| format!(" for record {id}")).unwrap_or_default())]
    Auth { record: Option<u64> },

    /// A serialized object could not be decoded.
    #[error("malformed data at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    /// A serialized object carries a version this build does not understand.
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u8,
        expected: u8,
    },

    /// The store refused a record.
    #[error("record {id} rejected: {reason}")]
    Rejected { id: u64, reason: RejectReason },

    /// Connection-level failure talking to a remote store.
    #[error("transport error: {0}")]
    Transport(String),

    /// The remote store answered with an application-level error.
    #[error("remote error: {0}")]
    Remote(String),

    #[error("nonce space exhausted for this payload key")]
    NonceExhausted,

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RejectReason {
    DimensionMismatch = 1,
    DuplicateId = 2,
}

impl RejectReason {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::DimensionMismatch),
            2 => Some(Self::DuplicateId),
            _ => None,
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DimensionMismatch => f.write_str("dimension mismatch"),
            Self::DuplicateId => f.write_str("duplicate id"),
        }
    }
}

impl Error {
    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Self::Format {
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    /// Short machine-parsable category used by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Param(_) => "param",
            Self::Input(_) => "input",
            Self::Auth { .. } => "auth",
            Self::Format { .. } => "format",
            Self::Version { .. } => "version",
            Self::Rejected { .. } => "rejected",
            Self::Transport(_) => "transport",
            Self::Remote(_) => "remote",
            Self::NonceExhausted => "nonce",
            Self::Io(_) => "io",
        }
    }
}
