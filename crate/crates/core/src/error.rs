use std::path::Path;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty sequence passed to {0}")]
    EmptySequence(&'static str),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("context generation failed after {attempts} attempts (shared={shared})")]
    GenerationBudget { attempts: usize, shared: usize },
    #[error("span {start}..{end} out of bounds for utterance of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("sequence length {got} does not match potential length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("missing annotation: {0}")]
    MissingAnnotation(String),
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("json: {0}")]
    Json(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}
