//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A pipeline configuration field violates its constraints. `field`
    /// names the first violated constraint.
    #[error("invalid config: {field}: {reason}")]
    ConfigInvalid { field: &'static str, reason: String },

    /// The input document is empty (or whitespace only).
    #[error("document is empty")]
    EmptyDocument,

    /// No brace-delimited JSON object could be parsed out of a model
    /// response that was expected to carry a note.
    #[error("no JSON note object found in model output")]
    NoteParseFailure,

    /// A prompt template does not carry exactly its declared slots.
    #[error("invalid template `{name}`: {reason}")]
    TemplateInvalid { name: String, reason: String },

    /// The backend kept failing with retryable errors until the retry
    /// budget ran out.
    #[error("backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },

    /// The backend answered with a non-retryable error status.
    #[error("backend rejected request (status {status}): {reason}")]
    BackendRejected { status: u16, reason: String },

    /// The backend kept timing out until the retry budget ran out.
    #[error("backend timed out after {attempts} attempts")]
    Timeout { attempts: u32 },

    /// The noise corpus has fewer tokens than the haystack target length.
    #[error("noise corpus too short: {corpus_tokens} tokens for a {target_tokens}-token document")]
    NoiseTooShort {
        corpus_tokens: usize,
        target_tokens: usize,
    },

    /// An evaluation was started with no tasks.
    #[error("task set is empty")]
    EmptyTaskSet,

    /// A line-delimited JSON file (tasks, traces, reports) failed to parse.
    #[error("malformed record at line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
