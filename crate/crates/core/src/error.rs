use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("diffusion kernel variance {variance:.4e} µeV² exceeds the wrap limit {limit:.4e} µeV² of the energy grid")]
    KernelWrap { variance: f64, limit: f64 },

    #[error("delay {delay} ps is beyond the resolvable range {max} ps of the energy grid")]
    DelayOutOfRange { delay: f64, max: f64 },

    #[error("Poisson rate {0:e} is too large for the sampler")]
    RateTooLarge(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("checksum mismatch in {what}")]
    Checksum { what: String },

    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Coarse classification used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn format(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParam { .. } | Error::KernelWrap { .. } | Error::DelayOutOfRange { .. } => {
                ErrorKind::Config
            }
            Error::Shape { .. }
            | Error::Io { .. }
            | Error::Checksum { .. }
            | Error::Format { .. }
            | Error::Version { .. } => ErrorKind::Data,
            Error::RateTooLarge(_) | Error::Numerical(_) => ErrorKind::Numerical,
        }
    }
}
