//! Token counting.
//!
//! The pipeline never needs exact tokenizer output; every budget decision
//! goes through the [`TokenCounter`] trait so counts stay swappable. The
//! builtin [`ApproxCounter`] is deterministic and cheap: each
//! whitespace-delimited word costs `ceil(chars / 6)` tokens. Counts are
//! additive across whitespace joins, which the segmenter and batcher rely
//! on to avoid re-counting full documents.

/// Counts tokens in a piece of text.
pub trait TokenCounter: Send + Sync {
    /// Stable identifier for reports and traces.
    fn name(&self) -> &str;

    /// Number of tokens in `text`. Empty and whitespace-only text is 0.
    fn count(&self, text: &str) -> usize;
}

/// Deterministic approximate counter: one token per started run of six
/// characters within each whitespace-delimited word.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxCounter;

impl TokenCounter for ApproxCounter {
    fn name(&self) -> &str {
        "approx-6"
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace()
            .map(|w| w.chars().count().div_ceil(6))
            .sum()
    }
}

/// Cost of a single word under the approximate scheme.
pub(crate) fn word_cost(word: &str) -> usize {
    word.chars().count().div_ceil(6)
}

/// Trims `text` from the end until it fits in `max_tokens` under `counter`.
///
/// Cuts at whitespace boundaries where possible so the kept prefix stays
/// readable; falls back to a character cut only when even the first word is
/// over budget.
pub fn truncate_to_tokens(text: &str, max_tokens: usize, counter: &dyn TokenCounter) -> String {
    if counter.count(text) <= max_tokens {
        return text.to_string();
    }
    if max_tokens == 0 {
        return String::new();
    }
    // Walk words left to right, keeping as many whole words as fit.
    let mut kept_end = 0;
    let mut used = 0;
    for (start, word) in split_word_indices(text) {
        let cost = word_cost(word);
        if used + cost > max_tokens {
            if kept_end == 0 {
                // Not even one word fits whole: cut inside this word.
                let budget_chars = max_tokens * 6;
                let cut = word
                    .char_indices()
                    .nth(budget_chars)
                    .map(|(i, _)| i)
                    .unwrap_or(word.len());
                return text[..start + cut].to_string();
            }
            break;
        }
        used += cost;
        kept_end = start + word.len();
    }
    text[..kept_end].to_string()
}

/// Yields `(byte_offset, word)` for each whitespace-delimited word.
pub(crate) fn split_word_indices(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_whitespace().map(move |w| {
        // `split_whitespace` yields subslices of `text`, so pointer
        // arithmetic recovers the offset without a second scan.
        let off = w.as_ptr() as usize - text.as_ptr() as usize;
        (off, w)
    })
}
