//! Two-stage long-document question answering for short-context language
//! models. A document is segmented to fit the model's window, each segment
//! is read in parallel into a structured note of quoted evidence plus
//! reasoning, irrelevant notes are filtered out, and the survivors are
//! iteratively merged under a token budget until a single note remains.
//! The final answer is produced from that note alone, so the model never
//! has to see the original document end to end.
//!
//! The crate ships an HTTP backend for OpenAI-style chat completion
//! endpoints and a deterministic scripted oracle used by the test suites,
//! plus a needle-in-a-haystack task generator and an evaluation harness
//! with exact-match, token-F1, and model-judge scoring.

pub mod backend;
pub mod config;
pub mod error;
pub mod eval;
pub mod haystack;
pub mod note;
pub mod pipeline;
pub mod prompt;
pub mod segment;
pub mod token;
pub mod trace;

pub use backend::{
    Backend, BackendRequest, BackendResponse, HttpBackend, HttpBackendConfig, OracleBackend,
    OracleRegistry, Stage,
};
pub use config::{validate_config, EvidenceMerge, Mode, PipelineConfig};
pub use error::{Error, Result};
pub use eval::{
    exact_match, format_summary, format_sweep, normalize_answer, run_eval, run_judge_eval,
    run_sweep, summarize, sweep_to_csv, token_f1, write_records_jsonl, BackendProvider, EvalRecord,
    EvalSummary, JudgeTemplates, JudgeVariant, OracleProvider, SharedProvider, SweepReport,
    SweepSpec,
};
pub use haystack::{
    build_haystack, generate_noise_corpus, make_task_suite, read_tasks_jsonl, task_document,
    write_tasks_jsonl, HaystackTask, TaskKind, VALID_TARGETS,
};
pub use note::{parse_all_notes, parse_note, serialize_note, Label, Note, Span};
pub use pipeline::{
    batch_by_size, batch_notes, prefilter_note, run_pipeline, Pipeline, PipelineResult,
};
pub use prompt::{PromptTemplates, Template};
pub use segment::{segment_text, Segment};
pub use token::{truncate_to_tokens, ApproxCounter, TokenCounter};
pub use trace::{
    read_trace_jsonl, trace_stats, write_trace_jsonl, LabelSource, TraceEvent, TraceStats,
};
