//! Prompt templates with named slots.
//!
//! Templates are plain text; a slot is written `{name}` and every
//! occurrence is replaced at render time. Shipped defaults are embedded in
//! the binary and can be overridden per file from a directory.

use std::path::Path;

use crate::error::{Error, Result};

/// Every slot name any template may use. Validation rejects a template
/// that carries a known slot it did not declare, which catches prompts
/// accidentally wired to the wrong stage.
const SLOT_VOCABULARY: &[&str] = &[
    "segment",
    "question",
    "notes",
    "context",
    "note_json",
    "answer",
    "prediction",
];

/// One template plus the slots it must carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    text: String,
    slots: Vec<&'static str>,
}

impl Template {
    pub fn new(
        name: impl Into<String>,
        text: impl Into<String>,
        slots: &[&'static str],
    ) -> Result<Self> {
        let name = name.into();
        let text = text.into();
        for slot in slots {
            if !text.contains(&format!("{{{slot}}}")) {
                return Err(Error::TemplateInvalid {
                    name,
                    reason: format!("missing slot {{{slot}}}"),
                });
            }
        }
        for slot in SLOT_VOCABULARY {
            if !slots.contains(slot) && text.contains(&format!("{{{slot}}}")) {
                return Err(Error::TemplateInvalid {
                    name,
                    reason: format!("undeclared slot {{{slot}}}"),
                });
            }
        }
        Ok(Template {
            name,
            text,
            slots: slots.to_vec(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes every `(slot, value)` pair in one pass over the
    /// template, so slot-shaped text inside an inserted value is never
    /// itself expanded.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        'scan: while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open..];
            for (slot, value) in values {
                let pattern_len = slot.len() + 2;
                if after.len() >= pattern_len
                    && after[1..].starts_with(slot)
                    && after[1 + slot.len()..].starts_with('}')
                {
                    out.push_str(value);
                    rest = &after[pattern_len..];
                    continue 'scan;
                }
            }
            out.push('{');
            rest = &after[1..];
        }
        out.push_str(rest);
        out
    }
}

/// The full set of pipeline prompts.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub gather: Template,
    pub filter: Template,
    pub merge: Template,
    pub answer: Template,
    /// Free-text variants used by the NoStructure and Normal modes.
    pub gather_free: Template,
    pub merge_free: Template,
}

const GATHER_TEXT: &str = include_str!("../assets/gather.txt");
const FILTER_TEXT: &str = include_str!("../assets/filter.txt");
const MERGE_TEXT: &str = include_str!("../assets/merge.txt");
const ANSWER_TEXT: &str = include_str!("../assets/answer.txt");
const GATHER_FREE_TEXT: &str = include_str!("../assets/gather_free.txt");
const MERGE_FREE_TEXT: &str = include_str!("../assets/merge_free.txt");

const GATHER_SLOTS: &[&str] = &["segment", "question"];
const FILTER_SLOTS: &[&str] = &["question", "note_json"];
const MERGE_SLOTS: &[&str] = &["notes", "question"];
const ANSWER_SLOTS: &[&str] = &["context", "question"];

impl PromptTemplates {
    /// The embedded default prompts.
    pub fn builtin() -> Self {
        PromptTemplates {
            gather: Template::new("gather", GATHER_TEXT, GATHER_SLOTS)
                .expect("embedded gather template is valid"),
            filter: Template::new("filter", FILTER_TEXT, FILTER_SLOTS)
                .expect("embedded filter template is valid"),
            merge: Template::new("merge", MERGE_TEXT, MERGE_SLOTS)
                .expect("embedded merge template is valid"),
            answer: Template::new("answer", ANSWER_TEXT, ANSWER_SLOTS)
                .expect("embedded answer template is valid"),
            gather_free: Template::new("gather_free", GATHER_FREE_TEXT, GATHER_SLOTS)
                .expect("embedded gather_free template is valid"),
            merge_free: Template::new("merge_free", MERGE_FREE_TEXT, MERGE_SLOTS)
                .expect("embedded merge_free template is valid"),
        }
    }

    /// Loads overrides from `dir`, one file per template (`gather.txt`,
    /// `filter.txt`, `merge.txt`, `answer.txt`, `gather_free.txt`,
    /// `merge_free.txt`). Missing files keep the builtin text.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |file: &str, fallback: &str| -> Result<String> {
            let path = dir.join(file);
            if path.is_file() {
                Ok(std::fs::read_to_string(&path)?)
            } else {
                Ok(fallback.to_string())
            }
        };
        Ok(PromptTemplates {
            gather: Template::new("gather", read("gather.txt", GATHER_TEXT)?, GATHER_SLOTS)?,
            filter: Template::new("filter", read("filter.txt", FILTER_TEXT)?, FILTER_SLOTS)?,
            merge: Template::new("merge", read("merge.txt", MERGE_TEXT)?, MERGE_SLOTS)?,
            answer: Template::new("answer", read("answer.txt", ANSWER_TEXT)?, ANSWER_SLOTS)?,
            gather_free: Template::new(
                "gather_free",
                read("gather_free.txt", GATHER_FREE_TEXT)?,
                GATHER_SLOTS,
            )?,
            merge_free: Template::new(
                "merge_free",
                read("merge_free.txt", MERGE_FREE_TEXT)?,
                MERGE_SLOTS,
            )?,
        })
    }
}
