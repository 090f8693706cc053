//! Crate-wide error type.

use std::fmt;

/// Errors raised by tensor math, graph evaluation, decoding and file I/O.
#[derive(Debug)]
pub enum Error {
    /// Shape or rank disagreement between operands.
    Dimension(String),
    /// Invalid argument value (non-positive clip, empty list, ...).
    Parameter(String),
    /// Token id outside the vocabulary, or a malformed vocabulary.
    Vocabulary(String),
    /// Graph construction or evaluation failure.
    Graph(String),
    /// A graph input node was evaluated without a feed, or the feed shape
    /// disagrees with the declared one.
    Feed(String),
    /// Decoder state does not match the model configuration.
    State(String),
    /// Malformed input file (lexical table, n-best list, config, ...).
    InputFormat(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Parameter(m) => write!(f, "parameter error: {m}"),
            Error::Vocabulary(m) => write!(f, "vocabulary error: {m}"),
            Error::Graph(m) => write!(f, "graph error: {m}"),
            Error::Feed(m) => write!(f, "feed error: {m}"),
            Error::State(m) => write!(f, "state error: {m}"),
            Error::InputFormat(m) => write!(f, "input format error: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
