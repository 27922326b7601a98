use alloc::string::String;
use core::fmt;

/// Error type shared by every module in this crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Structural misconfiguration: mismatched shapes, inconsistent dims.
    Config(String),
    /// Invalid data handed to an operation (out-of-range index, bad label...).
    Validation(String),
    /// An API contract was violated (e.g. backward on a non-scalar root).
    Contract(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
