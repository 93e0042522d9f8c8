//! The two-stage long-input pipeline.
//!
//! Stage 1 gathers one note per segment in parallel and filters out the
//! empty ones. Stage 2 batches surviving notes under a token budget and
//! merges each batch, iterating until a single note fits the final
//! context. Stage 3 answers from that note alone; the model never sees
//! the original segments again.
//!
//! Determinism contract: with a deterministic backend, output bytes are
//! independent of the parallelism setting. Parallel waves are assembled
//! back in logical order before anything is recorded.

use std::sync::Arc;

use futures::stream::{self, StreamExt, TryStreamExt};

use crate::backend::{Backend, BackendRequest, BackendResponse, Stage};
use crate::config::{validate_config, EvidenceMerge, PipelineConfig};
use crate::error::Result;
use crate::note::{parse_note, serialize_note, Label, Note};
use crate::prompt::PromptTemplates;
use crate::segment::{segment_text, Segment};
use crate::token::{truncate_to_tokens, TokenCounter};
use crate::trace::{LabelSource, TraceEvent, TraceStats};

/// Reasoning kept when a gather response never parses, capped to this
/// many tokens.
const DEGRADED_REASONING_TOKENS: usize = 200;

/// Case-insensitive reasoning patterns that mark a note as contentless.
const NO_INFO_PATTERNS: &[&str] = &["no information", "no relevant information", "not mentioned"];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub answer: String,
    pub final_note: Note,
    pub trace: Vec<TraceEvent>,
}

impl PipelineResult {
    pub fn stats(&self) -> TraceStats {
        crate::trace::trace_stats(&self.trace)
    }
}

/// Marks a gen-0 note Remove when its evidence is empty or its reasoning
/// admits there was nothing to find; other notes stay Unlabeled for the
/// model filter.
pub fn prefilter_note(mut note: Note) -> Note {
    if note.evidence.trim().is_empty() || matches_no_info(&note.reasoning) {
        note.label = Label::Remove;
    }
    note
}

fn matches_no_info(text: &str) -> bool {
    let lower = text.to_lowercase();
    NO_INFO_PATTERNS.iter().any(|p| lower.contains(p))
}

/// Greedy left-to-right packing of `sizes` into batches whose totals stay
/// within `max_tokens`. An element larger than the whole budget gets a
/// singleton batch. Returns index batches; order is preserved and every
/// index appears exactly once.
pub fn batch_by_size(sizes: &[usize], max_tokens: usize) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut total = 0usize;
    for (i, &size) in sizes.iter().enumerate() {
        if current.is_empty() || total + size <= max_tokens {
            current.push(i);
            total += size;
        } else {
            batches.push(std::mem::take(&mut current));
            current.push(i);
            total = size;
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// Packs notes by serialized token size. The per-batch payload equals the
/// sum of member sizes because the counter is additive across whitespace
/// joins.
pub fn batch_notes(
    notes: &[Note],
    max_tokens: usize,
    counter: &dyn TokenCounter,
) -> Vec<Vec<usize>> {
    let sizes: Vec<usize> = notes
        .iter()
        .map(|n| counter.count(&serialize_note(n)))
        .collect();
    batch_by_size(&sizes, max_tokens)
}

pub struct Pipeline {
    config: PipelineConfig,
    backend: Arc<dyn Backend>,
    templates: PromptTemplates,
    counter: Arc<dyn TokenCounter>,
}

/// Convenience wrapper constructing a [`Pipeline`] for one run.
pub async fn run_pipeline(
    question: &str,
    doc: &str,
    config: PipelineConfig,
    backend: Arc<dyn Backend>,
    templates: PromptTemplates,
    counter: Arc<dyn TokenCounter>,
) -> Result<PipelineResult> {
    Pipeline::new(config, backend, templates, counter)?
        .run(question, doc)
        .await
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        backend: Arc<dyn Backend>,
        templates: PromptTemplates,
        counter: Arc<dyn TokenCounter>,
    ) -> Result<Self> {
        validate_config(&config)?;
        Ok(Pipeline {
            config,
            backend,
            templates,
            counter,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// The text a note contributes to prompts: the JSON object in
    /// structured modes, the bare free text otherwise.
    fn payload(&self, note: &Note) -> String {
        if self.config.mode.structured() {
            serialize_note(note)
        } else {
            note.reasoning.clone()
        }
    }

    fn note_size(&self, note: &Note) -> usize {
        self.counter.count(&self.payload(note))
    }

    async fn call(
        &self,
        stage: Stage,
        position: usize,
        iteration: Option<u32>,
        prompt: String,
        events: &mut Vec<TraceEvent>,
    ) -> Result<BackendResponse> {
        let request = BackendRequest::new(stage, prompt, self.config.temperature);
        let response = self.backend.complete(&request).await?;
        events.push(TraceEvent::BackendCall {
            stage,
            position,
            iteration,
            prompt: request.prompt,
            response: response.text.clone(),
            attempts: response.attempts,
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
        });
        Ok(response)
    }

    /// Stage-1 note for one segment. Structured modes parse the response
    /// into a note, retrying the call once on a parse failure and then
    /// degrading to an empty-evidence note carrying the raw text.
    pub async fn gather_note(
        &self,
        question: &str,
        segment: &Segment,
    ) -> Result<(Note, Vec<TraceEvent>)> {
        let mut events = Vec::new();
        let template = if self.config.mode.structured() {
            &self.templates.gather
        } else {
            &self.templates.gather_free
        };
        let prompt = template.render(&[("segment", &segment.text), ("question", question)]);
        let response = self
            .call(
                Stage::Gather,
                segment.index,
                None,
                prompt.clone(),
                &mut events,
            )
            .await?;

        let (note, degraded) = if self.config.mode.structured() {
            match parse_note(&response.text) {
                Ok(parsed) => (from_parsed(parsed, segment.index), false),
                Err(_) => {
                    let retry = self
                        .call(Stage::Gather, segment.index, None, prompt, &mut events)
                        .await?;
                    match parse_note(&retry.text) {
                        Ok(parsed) => (from_parsed(parsed, segment.index), false),
                        Err(_) => {
                            let kept = truncate_to_tokens(
                                &retry.text,
                                DEGRADED_REASONING_TOKENS,
                                self.counter.as_ref(),
                            );
                            (Note::gathered("", kept, segment.index), true)
                        }
                    }
                }
            }
        } else {
            (Note::gathered("", response.text, segment.index), false)
        };

        let payload_tokens = if self.config.mode.structured() {
            self.counter.count(&note.evidence)
        } else {
            self.counter.count(&note.reasoning)
        };
        events.push(TraceEvent::NoteGathered {
            segment: segment.index,
            evidence_tokens: payload_tokens,
            degraded,
        });
        Ok((note, events))
    }

    /// Model relevance judgment for one note that survived the prefilter.
    /// Any response not containing the word "remove" keeps the note.
    pub async fn filter_note(
        &self,
        question: &str,
        mut note: Note,
        position: usize,
    ) -> Result<(Note, Vec<TraceEvent>)> {
        let mut events = Vec::new();
        let payload = self.payload(&note);
        let prompt = self
            .templates
            .filter
            .render(&[("question", question), ("note_json", &payload)]);
        let response = self
            .call(Stage::Filter, position, None, prompt, &mut events)
            .await?;
        note.label = if contains_word_remove(&response.text) {
            Label::Remove
        } else {
            Label::Keep
        };
        events.push(TraceEvent::LabelAssigned {
            note: position,
            label: note.label,
            source: LabelSource::Filter,
        });
        Ok((note, events))
    }

    /// Merges one batch into a single note. In ProgrammaticConcat mode the
    /// evidence is joined mechanically and the model only contributes
    /// reasoning; a model output that fails to parse falls back to the
    /// mechanical join in either mode.
    pub async fn merge_batch(
        &self,
        question: &str,
        batch: &[Note],
        iteration: u32,
        batch_index: usize,
    ) -> Result<(Note, Vec<TraceEvent>)> {
        debug_assert!(!batch.is_empty());
        let mut events = Vec::new();
        let payloads: Vec<String> = batch.iter().map(|n| self.payload(n)).collect();
        let notes_block = payloads.join("\n\n");
        let template = if self.config.mode.structured() {
            &self.templates.merge
        } else {
            &self.templates.merge_free
        };
        let prompt = template.render(&[("notes", &notes_block), ("question", question)]);
        let response = self
            .call(
                Stage::Merge,
                batch_index,
                Some(iteration),
                prompt,
                &mut events,
            )
            .await?;

        let concat_evidence = || -> String {
            batch
                .iter()
                .map(|n| n.evidence.as_str())
                .collect::<Vec<_>>()
                .join("\n")
        };
        let concat_reasoning = || -> String {
            batch
                .iter()
                .map(|n| n.reasoning.as_str())
                .collect::<Vec<_>>()
                .join("\n")
        };

        let (note, fallback) = if !self.config.mode.structured() {
            (Note::merged("", response.text, batch), false)
        } else {
            match (self.config.evidence_merge, parse_note(&response.text)) {
                (EvidenceMerge::ModelMerge, Ok(parsed)) => (
                    Note::merged(parsed.evidence, parsed.reasoning, batch),
                    false,
                ),
                (EvidenceMerge::ProgrammaticConcat, Ok(parsed)) => (
                    Note::merged(concat_evidence(), parsed.reasoning, batch),
                    false,
                ),
                (_, Err(_)) => (
                    Note::merged(concat_evidence(), concat_reasoning(), batch),
                    true,
                ),
            }
        };
        events.push(TraceEvent::MergeProduced {
            iteration,
            batch: batch_index,
            note_tokens: self.note_size(&note),
            fallback,
        });
        Ok((note, events))
    }

    /// Iteratively merges `notes` down to one note within the final
    /// budget. Stops early when an iteration makes no progress or the
    /// iteration cap is hit, then falls back to a mechanical concat
    /// truncated to fit (flagged in the trace and the returned bool).
    pub async fn reduce_notes(
        &self,
        question: &str,
        notes: Vec<Note>,
    ) -> Result<(Note, bool, Vec<TraceEvent>)> {
        debug_assert!(!notes.is_empty());
        let mut events = Vec::new();
        let budget = self.config.final_note_budget();
        let mut notes = notes;
        let mut iteration: u32 = 0;

        loop {
            let total: usize = notes.iter().map(|n| self.note_size(n)).sum();
            if notes.len() == 1 && total <= budget {
                let note = notes.pop().expect("len checked");
                return Ok((note, false, events));
            }
            if iteration >= self.config.max_iterations as u32 {
                break;
            }
            iteration += 1;

            let sizes: Vec<usize> = notes.iter().map(|n| self.note_size(n)).collect();
            let batches = batch_by_size(&sizes, self.config.max_merge_batch_tokens);
            events.push(TraceEvent::BatchesFormed {
                iteration,
                batches: batches.clone(),
            });

            let groups: Vec<Vec<Note>> = batches
                .iter()
                .map(|b| b.iter().map(|&i| notes[i].clone()).collect())
                .collect();
            let merge_jobs: Vec<_> = groups
                .iter()
                .enumerate()
                .map(|(bi, group)| self.merge_batch(question, group, iteration, bi))
                .collect();
            let merged: Vec<(Note, Vec<TraceEvent>)> = stream::iter(merge_jobs)
                .buffered(self.config.parallelism)
                .try_collect()
                .await?;

            let prev_count = notes.len();
            let prev_total: usize = sizes.iter().sum();
            notes = Vec::with_capacity(merged.len());
            for (note, batch_events) in merged {
                events.extend(batch_events);
                notes.push(note);
            }
            let new_total: usize = notes.iter().map(|n| self.note_size(n)).sum();
            events.push(TraceEvent::IterationEnded {
                iteration,
                notes: notes.len(),
                total_tokens: new_total,
            });
            let progress = notes.len() < prev_count || new_total < prev_total;
            if !progress {
                break;
            }
        }

        // Out of iterations or stalled: concat what is left and cut it
        // down to the budget, evidence tail first, then reasoning.
        let note = if notes.len() == 1 {
            notes.pop().expect("len checked")
        } else {
            let evidence = notes
                .iter()
                .map(|n| n.evidence.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            let reasoning = notes
                .iter()
                .map(|n| n.reasoning.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            Note::merged(evidence, reasoning, &notes)
        };
        let (note, from_tokens, to_tokens) = self.truncate_note(note, budget);
        events.push(TraceEvent::NoteTruncated {
            from_tokens,
            to_tokens,
        });
        Ok((note, true, events))
    }

    /// Cuts a note down so its rendered payload fits `budget` tokens,
    /// trimming the evidence tail first and the reasoning tail only once
    /// the evidence is gone.
    fn truncate_note(&self, mut note: Note, budget: usize) -> (Note, usize, usize) {
        let from_tokens = self.note_size(&note);
        loop {
            let size = self.note_size(&note);
            if size <= budget {
                break;
            }
            let over = size - budget;
            let evidence_tokens = self.counter.count(&note.evidence);
            if evidence_tokens > 0 {
                note.evidence = truncate_to_tokens(
                    &note.evidence,
                    evidence_tokens.saturating_sub(over),
                    self.counter.as_ref(),
                );
                continue;
            }
            let reasoning_tokens = self.counter.count(&note.reasoning);
            if reasoning_tokens == 0 {
                // Only scaffolding is left; nothing more can be cut.
                break;
            }
            note.reasoning = truncate_to_tokens(
                &note.reasoning,
                reasoning_tokens.saturating_sub(over),
                self.counter.as_ref(),
            );
        }
        let to_tokens = self.note_size(&note);
        (note, from_tokens, to_tokens)
    }

    /// Stage 3: answer from the final note alone.
    pub async fn answer_question(
        &self,
        question: &str,
        final_note: &Note,
    ) -> Result<(String, Vec<TraceEvent>)> {
        let mut events = Vec::new();
        let context = self.payload(final_note);
        let prompt = self
            .templates
            .answer
            .render(&[("context", &context), ("question", question)]);
        let response = self
            .call(Stage::Answer, 0, None, prompt, &mut events)
            .await?;
        let answer = response.text.trim().to_string();
        events.push(TraceEvent::AnswerProduced {
            answer: answer.clone(),
        });
        Ok((answer, events))
    }

    /// Full run: segment, gather in parallel, filter, reduce, answer.
    pub async fn run(&self, question: &str, doc: &str) -> Result<PipelineResult> {
        let segments = segment_text(doc, &self.config, self.counter.as_ref())?;
        let mut trace = vec![TraceEvent::SegmentsProduced {
            count: segments.len(),
            token_counts: segments.iter().map(|s| s.token_count).collect(),
        }];

        let gather_jobs: Vec<_> = segments
            .iter()
            .map(|segment| self.gather_note(question, segment))
            .collect();
        let gathered: Vec<(Note, Vec<TraceEvent>)> = stream::iter(gather_jobs)
            .buffered(self.config.parallelism)
            .try_collect()
            .await?;
        let mut notes = Vec::with_capacity(gathered.len());
        for (note, events) in gathered {
            trace.extend(events);
            notes.push(note);
        }

        let survivors = if self.config.mode.filtered() {
            // Rule prefilter first: costs nothing and removes the notes
            // that admit to having found nothing.
            let mut prefiltered = Vec::with_capacity(notes.len());
            for (position, note) in notes.into_iter().enumerate() {
                let note = if self.config.mode.structured() {
                    prefilter_note(note)
                } else {
                    prefilter_free(note)
                };
                trace.push(TraceEvent::LabelAssigned {
                    note: position,
                    label: note.label,
                    source: LabelSource::Prefilter,
                });
                prefiltered.push((position, note));
            }
            let undecided: Vec<(usize, Note)> = prefiltered
                .iter()
                .filter(|(_, n)| n.label == Label::Unlabeled)
                .cloned()
                .collect();
            let filter_jobs: Vec<_> = undecided
                .iter()
                .map(|(position, note)| self.filter_note(question, note.clone(), *position))
                .collect();
            let filtered: Vec<(Note, Vec<TraceEvent>)> = stream::iter(filter_jobs)
                .buffered(self.config.parallelism)
                .try_collect()
                .await?;
            let mut decided = std::collections::HashMap::new();
            for ((position, _), (note, events)) in undecided.iter().zip(filtered) {
                trace.extend(events);
                decided.insert(*position, note);
            }
            prefiltered
                .into_iter()
                .map(|(position, note)| decided.remove(&position).unwrap_or(note))
                .filter(|n| n.label != Label::Remove)
                .collect()
        } else {
            notes
        };

        // Everything filtered out: carry on with one empty note so the
        // answer stage can still respond.
        let survivors = if survivors.is_empty() {
            vec![Note::gathered("", "", 0)]
        } else {
            survivors
        };

        let (final_note, _truncated, reduce_events) =
            self.reduce_notes(question, survivors).await?;
        trace.extend(reduce_events);

        let (answer, answer_events) = self.answer_question(question, &final_note).await?;
        trace.extend(answer_events);

        Ok(PipelineResult {
            answer,
            final_note,
            trace,
        })
    }
}

/// Free-text prefilter: only the no-information patterns apply, because
/// free-text notes keep their content in `reasoning` and always have
/// empty evidence.
fn prefilter_free(mut note: Note) -> Note {
    if matches_no_info(&note.reasoning) {
        note.label = Label::Remove;
    }
    note
}

fn from_parsed(parsed: Note, segment: usize) -> Note {
    Note::gathered(parsed.evidence, parsed.reasoning, segment)
}

fn contains_word_remove(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric())
        .any(|w| w.eq_ignore_ascii_case("remove"))
}
