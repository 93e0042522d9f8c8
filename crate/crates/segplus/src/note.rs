//! Structured notes: the unit of information flowing through the pipeline.
//!
//! Only `evidence` and `reasoning` ever reach a prompt. Labels, spans and
//! generations are bookkeeping on the artifact side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relevance label assigned by the filtering stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Label {
    #[default]
    Unlabeled,
    Keep,
    Remove,
}

/// Inclusive range of source segment indices a note covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn single(index: usize) -> Self {
        Span {
            start: index,
            end: index,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false // inclusive ranges always cover at least one segment
    }

    /// Smallest span covering both inputs.
    pub fn union(&self, other: &Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

impl Default for Span {
    fn default() -> Self {
        Span::single(0)
    }
}

/// One {Evidence, Reasoning} record, plus artifact-side metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    /// Verbatim quotations from the source document.
    pub evidence: String,
    /// Model commentary tying the evidence to the question.
    pub reasoning: String,
    pub label: Label,
    pub span: Span,
    /// 0 for stage-1 notes; merged notes carry 1 + max(input generations).
    pub generation: u32,
}

impl Note {
    /// Fresh generation-0 note for one segment.
    pub fn gathered(
        evidence: impl Into<String>,
        reasoning: impl Into<String>,
        segment: usize,
    ) -> Self {
        Note {
            evidence: evidence.into(),
            reasoning: reasoning.into(),
            label: Label::Unlabeled,
            span: Span::single(segment),
            generation: 0,
        }
    }

    /// Note produced by merging `inputs`, with span/generation derived.
    pub fn merged(
        evidence: impl Into<String>,
        reasoning: impl Into<String>,
        inputs: &[Note],
    ) -> Self {
        debug_assert!(!inputs.is_empty());
        let span = inputs
            .iter()
            .map(|n| n.span)
            .reduce(|a, b| a.union(&b))
            .unwrap_or_default();
        let generation = 1 + inputs.iter().map(|n| n.generation).max().unwrap_or(0);
        Note {
            evidence: evidence.into(),
            reasoning: reasoning.into(),
            label: Label::Unlabeled,
            span,
            generation,
        }
    }
}

/// Renders a note as the JSON object shown to the model. Metadata fields
/// are deliberately excluded.
pub fn serialize_note(note: &Note) -> String {
    format!(
        r#"{{"Evidence": {}, "Reasoning": {}}}"#,
        serde_json::to_string(&note.evidence).expect("string serialization is infallible"),
        serde_json::to_string(&note.reasoning).expect("string serialization is infallible"),
    )
}

/// Extracts a note from a model response.
///
/// Model output routinely wraps the JSON object in prose, so this scans for
/// brace-delimited candidates and takes the first one that parses as a JSON
/// object. Key lookup ignores ASCII case; missing keys default to empty.
pub fn parse_note(raw: &str) -> Result<Note> {
    for candidate in scan_objects(raw) {
        if let Some((evidence, reasoning)) = parse_object_fields(candidate) {
            return Ok(Note {
                evidence,
                reasoning,
                label: Label::Unlabeled,
                span: Span::default(),
                generation: 0,
            });
        }
    }
    Err(Error::NoteParseFailure)
}

/// Parses every well-formed note object embedded in `raw`, in order.
pub fn parse_all_notes(raw: &str) -> Vec<Note> {
    scan_objects(raw)
        .into_iter()
        .filter_map(|c| {
            parse_object_fields(c).map(|(evidence, reasoning)| Note {
                evidence,
                reasoning,
                label: Label::Unlabeled,
                span: Span::default(),
                generation: 0,
            })
        })
        .collect()
}

fn parse_object_fields(candidate: &str) -> Option<(String, String)> {
    let value: serde_json::Value = serde_json::from_str(candidate).ok()?;
    let map = value.as_object()?;
    let field = |want: &str| -> String {
        map.iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(want))
            .map(|(_, v)| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_default()
    };
    Some((field("evidence"), field("reasoning")))
}

/// Finds top-level balanced `{…}` slices, honoring JSON string syntax so
/// braces inside quoted values do not split objects.
fn scan_objects(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in text.char_indices() {
        if depth > 0 && in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    out.push(&text[start..=i]);
                }
            }
            '"' if depth > 0 => in_string = true,
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn serialize_plain_note() {
        let note = Note::gathered("A.", "B.", 0);
        assert_eq!(
            serialize_note(&note),
            r#"{"Evidence": "A.", "Reasoning": "B."}"#
        );
    }

    #[test]
    fn serialize_empty_note() {
        let note = Note::gathered("", "", 0);
        assert_eq!(
            serialize_note(&note),
            r#"{"Evidence": "", "Reasoning": ""}"#
        );
    }

    #[test]
    fn serialize_excludes_metadata() {
        let mut note = Note::gathered("E", "R", 3);
        note.label = Label::Keep;
        note.generation = 5;
        let s = serialize_note(&note);
        assert!(!s.contains("Keep"));
        assert!(!s.contains("span"));
        assert!(!s.contains("generation"));
    }

    #[test]
    fn parse_strips_prose_wrapper() {
        let note = parse_note(r#"Here is the note: {"Evidence": "X", "Reasoning": "Y"}"#).unwrap();
        assert_eq!(note.evidence, "X");
        assert_eq!(note.reasoning, "Y");
        assert_eq!(note.label, Label::Unlabeled);
        assert_eq!(note.generation, 0);
    }

    #[test]
    fn parse_is_case_insensitive_and_defaults_missing() {
        let note = parse_note(r#"{"evidence": "X"}"#).unwrap();
        assert_eq!(note.evidence, "X");
        assert_eq!(note.reasoning, "");
    }

    #[test]
    fn parse_fails_without_object() {
        assert!(matches!(
            parse_note("no json here"),
            Err(Error::NoteParseFailure)
        ));
    }

    #[test]
    fn parse_skips_unparseable_candidates() {
        // An invalid balanced object is skipped in favor of a later one.
        let raw = r#"{not json} then {"Evidence": "kept", "Reasoning": "r"}"#;
        let note = parse_note(raw).unwrap();
        assert_eq!(note.evidence, "kept");
        // An unbalanced outer brace swallows everything after it.
        assert!(parse_note(r#"{broken {"Evidence": "x"}"#).is_err());
    }

    #[test]
    fn escaped_quotes_round_trip() {
        let original = Note::gathered(r#"He said "stop"."#, "line1\nline2", 0);
        let parsed = parse_note(&serialize_note(&original)).unwrap();
        assert_eq!(parsed.evidence, original.evidence);
        assert_eq!(parsed.reasoning, original.reasoning);
    }

    #[test]
    fn braces_inside_strings_do_not_split() {
        let original = Note::gathered("set {a, b} and } stray", "{{nested}}", 0);
        let parsed = parse_note(&serialize_note(&original)).unwrap();
        assert_eq!(parsed.evidence, original.evidence);
        assert_eq!(parsed.reasoning, original.reasoning);
    }

    #[test]
    fn parse_all_notes_preserves_order() {
        let raw = format!(
            "first: {} and second: {}",
            serialize_note(&Note::gathered("E1", "R1", 0)),
            serialize_note(&Note::gathered("E2", "R2", 1)),
        );
        let notes = parse_all_notes(&raw);
        assert_eq!(notes.len(), 2);
        assert_eq!(notes[0].evidence, "E1");
        assert_eq!(notes[1].evidence, "E2");
    }

    #[test]
    fn merged_note_derives_span_and_generation() {
        let a = Note::gathered("A", "", 1);
        let mut b = Note::gathered("B", "", 4);
        b.generation = 2;
        let m = Note::merged("AB", "r", &[a, b]);
        assert_eq!(m.span, Span { start: 1, end: 4 });
        assert_eq!(m.generation, 3);
    }

    #[test]
    fn span_union_and_len() {
        let s = Span::single(2).union(&Span::single(5));
        assert_eq!(s, Span { start: 2, end: 5 });
        assert_eq!(s.len(), 4);
        assert_eq!(Span::single(7).len(), 1);
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(evidence in ".*", reasoning in ".*") {
            let original = Note::gathered(evidence.clone(), reasoning.clone(), 0);
            let parsed = parse_note(&serialize_note(&original)).unwrap();
            prop_assert_eq!(parsed.evidence, evidence);
            prop_assert_eq!(parsed.reasoning, reasoning);
        }

        #[test]
        fn parse_never_panics(raw in ".*") {
            let _ = parse_note(&raw);
            let _ = parse_all_notes(&raw);
        }
    }
}
