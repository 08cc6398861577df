//! Crate-wide error type.

use std::fmt;

/// Errors produced by scene construction, bound assembly, and estimation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates its documented domain (non-positive dimension,
    /// out-of-range constant, malformed list, ...).
    InvalidArgument(String),
    /// A position coincides with an RIS element or the RIS center, so the
    /// steering vector or its derivatives are undefined.
    SingularGeometry(String),
    /// The effective channel is identically zero and cannot be calibrated
    /// or projected onto.
    DegenerateChannel(String),
    /// A bound matrix is numerically singular.
    IllConditioned { condition: f64, context: String },
    /// Every optimizer start diverged.
    NoSolution(String),
    /// Argument or order outside the supported range of a special function.
    UnsupportedRange(String),
    /// Observations carry no usable signal for initialization.
    NoInit(String),
    /// Configuration file could not be parsed or validated.
    Config(String),
    /// Underlying I/O failure.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::SingularGeometry(msg) => write!(f, "singular geometry: {msg}"),
            Error::DegenerateChannel(msg) => write!(f, "degenerate channel: {msg}"),
            Error::IllConditioned { condition, context } => {
                write!(f, "ill-conditioned matrix (cond = {condition:.3e}): {context}")
            }
            Error::NoSolution(msg) => write!(f, "no solution: {msg}"),
            Error::UnsupportedRange(msg) => write!(f, "unsupported range: {msg}"),
            Error::NoInit(msg) => write!(f, "initialization failed: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
