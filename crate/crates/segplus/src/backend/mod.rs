//! Language-model backends: a real OpenAI-compatible HTTP client and a
//! deterministic scripted oracle for offline runs.

mod http;
mod oracle;

pub use http::{HttpBackend, HttpBackendConfig};
pub use oracle::{OracleBackend, OracleRegistry};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Which pipeline stage issued a request. The oracle dispatches on this;
/// the HTTP backend ignores it beyond logging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Gather,
    Filter,
    Merge,
    Answer,
    Judge,
}

impl Stage {
    /// Output-token cap requested from the model for this stage.
    pub fn max_output_tokens(self) -> usize {
        match self {
            Stage::Gather => 1024,
            Stage::Filter => 16,
            Stage::Merge => 2048,
            Stage::Answer => 256,
            Stage::Judge => 64,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Gather => "gather",
            Stage::Filter => "filter",
            Stage::Merge => "merge",
            Stage::Answer => "answer",
            Stage::Judge => "judge",
        };
        f.write_str(s)
    }
}

/// One completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub stage: Stage,
    pub prompt: String,
    pub temperature: f32,
    pub max_output_tokens: usize,
}

impl BackendRequest {
    pub fn new(stage: Stage, prompt: impl Into<String>, temperature: f32) -> Self {
        let prompt = prompt.into();
        debug_assert!(!prompt.is_empty(), "prompts must be non-empty");
        debug_assert!(temperature >= 0.0);
        BackendRequest {
            stage,
            prompt,
            temperature,
            max_output_tokens: stage.max_output_tokens(),
        }
    }
}

/// One completion result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    /// How many tries the transport needed; always ≥ 1.
    pub attempts: u32,
}

/// A completion provider callable from many workers at once.
#[async_trait]
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, request: &BackendRequest) -> Result<BackendResponse>;
}
