use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, ranges, flags).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("truncated {0}")]
    Truncated(&'static str),

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported {what} version {version}")]
    UnsupportedVersion { what: &'static str, version: u8 },

    #[error("weight file checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("weight entry `{name}`: {reason}")]
    Entry { name: String, reason: String },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn entry(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Entry {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by the byte source rather than by the caller:
    /// I/O errors and truncated input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Truncated(_))
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
