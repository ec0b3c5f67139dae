use std::fmt;

/// Errors produced by channel derivation, design construction, and simulation.
#[derive(Debug)]
pub enum Error {
    /// An input violated a documented invariant (bad distribution, bad range).
    Invalid(String),
    /// The virtual channel carries no contention information (no drop in C_v).
    DegenerateVirtualChannel,
    /// A design constant or table failed validation.
    Design(String),
    /// A pinpoint condition was violated; `item` is the failing condition item (1-4).
    Pinpoint { item: u8, detail: String },
    /// Configuration file could not be parsed or described an invalid object.
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::DegenerateVirtualChannel => {
                write!(f, "virtual channel parameters carry no contention information")
            }
            Error::Design(msg) => write!(f, "design validation failed: {msg}"),
            Error::Pinpoint { item, detail } => {
                write!(f, "pinpoint condition item {item} violated: {detail}")
            }
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
