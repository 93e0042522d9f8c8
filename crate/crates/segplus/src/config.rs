//! Pipeline configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How stage outputs are represented and filtered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Mode {
    /// Structured notes with relevance labeling (prefilter + model filter).
    #[default]
    Full,
    /// Structured notes, both filters skipped.
    NoLabel,
    /// Free-text notes; filters still applied to the free text.
    NoStructure,
    /// Free-text notes, no filtering at all.
    Normal,
}

impl Mode {
    /// Whether gather and merge use structured JSON notes.
    pub fn structured(self) -> bool {
        matches!(self, Mode::Full | Mode::NoLabel)
    }

    /// Whether the prefilter and model filter run.
    pub fn filtered(self) -> bool {
        matches!(self, Mode::Full | Mode::NoStructure)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "full" => Ok(Mode::Full),
            "nolabel" => Ok(Mode::NoLabel),
            "nostructure" => Ok(Mode::NoStructure),
            "normal" => Ok(Mode::Normal),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Full => "full",
            Mode::NoLabel => "no-label",
            Mode::NoStructure => "no-structure",
            Mode::Normal => "normal",
        };
        f.write_str(s)
    }
}

/// How evidence from multiple notes is combined during merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum EvidenceMerge {
    /// The model rewrites the batch into one note.
    #[default]
    ModelMerge,
    /// Evidence strings are concatenated verbatim; only reasoning is
    /// rewritten by the model.
    ProgrammaticConcat,
}

impl std::str::FromStr for EvidenceMerge {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "modelmerge" | "model" => Ok(EvidenceMerge::ModelMerge),
            "programmaticconcat" | "concat" => Ok(EvidenceMerge::ProgrammaticConcat),
            other => Err(format!("unknown evidence merge `{other}`")),
        }
    }
}

impl std::fmt::Display for EvidenceMerge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EvidenceMerge::ModelMerge => "model-merge",
            EvidenceMerge::ProgrammaticConcat => "programmatic-concat",
        };
        f.write_str(s)
    }
}

/// All tunables for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Token budget per document segment.
    pub segment_size: usize,
    /// Token budget for one merge batch of serialized notes.
    pub max_merge_batch_tokens: usize,
    /// Context window of the answering call.
    pub final_context_limit: usize,
    /// Tokens held back from `final_context_limit` for the answer prompt
    /// around the note.
    pub prompt_overhead_reserve: usize,
    /// Upper bound on merge rounds before programmatic fallback.
    pub max_iterations: usize,
    /// Maximum concurrent backend calls.
    pub parallelism: usize,
    pub mode: Mode,
    pub evidence_merge: EvidenceMerge,
    /// Sampling temperature passed to the backend.
    pub temperature: f32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            segment_size: 3000,
            max_merge_batch_tokens: 3000,
            final_context_limit: 3500,
            prompt_overhead_reserve: 500,
            max_iterations: 8,
            parallelism: 8,
            mode: Mode::default(),
            evidence_merge: EvidenceMerge::default(),
            temperature: 0.0,
        }
    }
}

impl PipelineConfig {
    /// Token budget the final note must fit in before answering.
    pub fn final_note_budget(&self) -> usize {
        self.final_context_limit - self.prompt_overhead_reserve
    }
}

/// Checks `config` field constraints, reporting the first violation.
///
/// Checks run in declaration order: `segment_size`, then
/// `max_merge_batch_tokens`, then the `final_context_limit` /
/// `prompt_overhead_reserve` relation, then `max_iterations`, then
/// `parallelism`.
pub fn validate_config(config: &PipelineConfig) -> Result<()> {
    if config.segment_size < 100 {
        return Err(Error::ConfigInvalid {
            field: "segment_size",
            reason: format!("must be at least 100, got {}", config.segment_size),
        });
    }
    if config.max_merge_batch_tokens < 256 {
        return Err(Error::ConfigInvalid {
            field: "max_merge_batch_tokens",
            reason: format!(
                "must be at least 256, got {}",
                config.max_merge_batch_tokens
            ),
        });
    }
    if config.final_context_limit <= config.prompt_overhead_reserve {
        return Err(Error::ConfigInvalid {
            field: "final_context_limit",
            reason: format!(
                "must exceed prompt_overhead_reserve ({} <= {})",
                config.final_context_limit, config.prompt_overhead_reserve
            ),
        });
    }
    if config.max_iterations == 0 {
        return Err(Error::ConfigInvalid {
            field: "max_iterations",
            reason: "must be at least 1".to_string(),
        });
    }
    if config.parallelism == 0 {
        return Err(Error::ConfigInvalid {
            field: "parallelism",
            reason: "must be at least 1".to_string(),
        });
    }
    Ok(())
}
