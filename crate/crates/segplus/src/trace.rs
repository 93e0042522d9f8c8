//! Run traces: an ordered, timestamp-free log of everything a pipeline
//! run did, including verbatim backend prompts and responses.
//!
//! Events carry no wall-clock data and are appended in logical order
//! (parallel waves are recorded by position, not completion), so two runs
//! with the same inputs serialize to identical bytes.

use serde::{Deserialize, Serialize};

use crate::backend::Stage;
use crate::error::Result;
use crate::note::Label;

/// Which rule assigned a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSource {
    Prefilter,
    Filter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    SegmentsProduced {
        count: usize,
        token_counts: Vec<usize>,
    },
    /// One backend round trip, recorded verbatim. `position` is the
    /// logical index within the stage's wave (segment index for gather,
    /// batch index for merge); `iteration` is set for merge calls.
    BackendCall {
        stage: Stage,
        position: usize,
        iteration: Option<u32>,
        prompt: String,
        response: String,
        attempts: u32,
        prompt_tokens: usize,
        completion_tokens: usize,
    },
    NoteGathered {
        segment: usize,
        evidence_tokens: usize,
        /// True when parsing failed twice and the raw text was kept.
        degraded: bool,
    },
    LabelAssigned {
        note: usize,
        label: Label,
        source: LabelSource,
    },
    BatchesFormed {
        iteration: u32,
        /// Note positions per batch, in order.
        batches: Vec<Vec<usize>>,
    },
    MergeProduced {
        iteration: u32,
        batch: usize,
        note_tokens: usize,
        /// True when the model output failed to parse and evidence was
        /// concatenated programmatically instead.
        fallback: bool,
    },
    IterationEnded {
        iteration: u32,
        notes: usize,
        total_tokens: usize,
    },
    NoteTruncated {
        from_tokens: usize,
        to_tokens: usize,
    },
    AnswerProduced {
        answer: String,
    },
}

/// Aggregates extracted from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceStats {
    pub gather_calls: usize,
    pub filter_calls: usize,
    pub merge_calls: usize,
    pub answer_calls: usize,
    pub judge_calls: usize,
    pub backend_calls: usize,
    pub iterations: u32,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub total_tokens: usize,
    pub truncated: bool,
}

/// Folds a trace into call and token totals.
pub fn trace_stats(events: &[TraceEvent]) -> TraceStats {
    let mut stats = TraceStats::default();
    for event in events {
        match event {
            TraceEvent::BackendCall {
                stage,
                attempts: _,
                prompt_tokens,
                completion_tokens,
                ..
            } => {
                match stage {
                    Stage::Gather => stats.gather_calls += 1,
                    Stage::Filter => stats.filter_calls += 1,
                    Stage::Merge => stats.merge_calls += 1,
                    Stage::Answer => stats.answer_calls += 1,
                    Stage::Judge => stats.judge_calls += 1,
                }
                stats.backend_calls += 1;
                stats.prompt_tokens += prompt_tokens;
                stats.completion_tokens += completion_tokens;
            }
            TraceEvent::IterationEnded { iteration, .. } => {
                stats.iterations = stats.iterations.max(*iteration);
            }
            TraceEvent::NoteTruncated { .. } => stats.truncated = true,
            _ => {}
        }
    }
    stats.total_tokens = stats.prompt_tokens + stats.completion_tokens;
    stats
}

/// Writes one JSON object per line.
pub fn write_trace_jsonl<W: std::io::Write>(events: &[TraceEvent], mut writer: W) -> Result<()> {
    for event in events {
        let line = serde_json::to_string(event).expect("trace events serialize infallibly");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a trace back; lines that fail to parse are reported by number.
pub fn read_trace_jsonl(text: &str) -> Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent =
            serde_json::from_str(line).map_err(|e| crate::error::Error::MalformedLine {
                line: i + 1,
                reason: format!("bad trace record: {e}"),
            })?;
        events.push(event);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_events() -> Vec<TraceEvent> {
        vec![
            TraceEvent::SegmentsProduced {
                count: 2,
                token_counts: vec![10, 8],
            },
            TraceEvent::BackendCall {
                stage: Stage::Gather,
                position: 0,
                iteration: None,
                prompt: "p0".to_string(),
                response: "r0".to_string(),
                attempts: 1,
                prompt_tokens: 5,
                completion_tokens: 2,
            },
            TraceEvent::BackendCall {
                stage: Stage::Filter,
                position: 0,
                iteration: None,
                prompt: "p1".to_string(),
                response: "Keep".to_string(),
                attempts: 1,
                prompt_tokens: 4,
                completion_tokens: 1,
            },
            TraceEvent::IterationEnded {
                iteration: 1,
                notes: 1,
                total_tokens: 9,
            },
            TraceEvent::NoteTruncated {
                from_tokens: 12,
                to_tokens: 9,
            },
            TraceEvent::AnswerProduced {
                answer: "x".to_string(),
            },
        ]
    }

    #[test]
    fn stats_count_calls_by_stage() {
        let stats = trace_stats(&sample_events());
        assert_eq!(stats.gather_calls, 1);
        assert_eq!(stats.filter_calls, 1);
        assert_eq!(stats.merge_calls, 0);
        assert_eq!(stats.backend_calls, 2);
        assert_eq!(stats.iterations, 1);
        assert_eq!(stats.prompt_tokens, 9);
        assert_eq!(stats.completion_tokens, 3);
        assert_eq!(stats.total_tokens, 12);
        assert!(stats.truncated);
    }

    #[test]
    fn jsonl_round_trips() {
        let events = sample_events();
        let mut buf = Vec::new();
        write_trace_jsonl(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), events.len());
        let back = read_trace_jsonl(&text).unwrap();
        assert_eq!(back, events);
    }

    #[test]
    fn jsonl_is_deterministic() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_trace_jsonl(&sample_events(), &mut a).unwrap();
        write_trace_jsonl(&sample_events(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_line_is_reported_with_number() {
        let err = read_trace_jsonl("{\"event\":\"nope\"}\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
