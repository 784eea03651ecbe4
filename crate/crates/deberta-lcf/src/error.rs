//! Error type shared across the crate.

use std::fmt;

/// Everything that can go wrong, from tensor shape mismatches to malformed
/// dataset files.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    /// An index (token id, row id) is outside the valid range.
    Index { what: &'static str, index: usize, limit: usize },
    /// A softmax row had every entry masked out.
    DegenerateRow { row: usize },
    /// A caller violated an operation's contract.
    Contract(String),
    /// A model or run configuration violates one of its constraints.
    Config(String),
    /// Malformed dataset markup.
    Parse { line: usize, msg: String },
    /// Parsed record contradicts itself (offsets do not match the term).
    Integrity { sentence_id: String, msg: String },
    /// Bad record in a line-oriented dataset file.
    Format { record: usize, msg: String },
    /// A character span could not be aligned to any token.
    Alignment { char_from: usize, char_to: usize },
    /// Checkpoint file is unreadable or inconsistent.
    Checkpoint { field: String, msg: String },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            Error::Index { what, index, limit } => {
                write!(f, "{what} index {index} out of range (limit {limit})")
            }
            Error::DegenerateRow { row } => {
                write!(f, "softmax row {row} is fully masked")
            }
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::Integrity { sentence_id, msg } => {
                write!(f, "integrity error in sentence {sentence_id}: {msg}")
            }
            Error::Format { record, msg } => write!(f, "bad record {record}: {msg}"),
            Error::Alignment { char_from, char_to } => {
                write!(f, "char span [{char_from}, {char_to}) overlaps no token")
            }
            Error::Checkpoint { field, msg } => write!(f, "checkpoint field {field}: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
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
