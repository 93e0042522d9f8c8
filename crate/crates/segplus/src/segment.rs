//! Document segmentation: greedy budget fill with boundary-aware cuts.
//!
//! Cuts are chosen so that joining all segment texts in order reproduces
//! the document byte for byte. Cut points always sit at word starts, so
//! inter-word whitespace stays with the segment to its left; the final
//! segment absorbs any trailing whitespace.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::token::{split_word_indices, word_cost, TokenCounter};

/// One contiguous slice of the source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub text: String,
    /// Tokens under the counter the pipeline was configured with.
    pub token_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoundaryKind {
    Paragraph,
    Sentence,
    Whitespace,
}

#[derive(Debug, Clone, Copy)]
struct Atom {
    /// Byte offset of the word start in the document.
    offset: usize,
    len: usize,
    cost: usize,
}

/// A candidate cut point inside the segment being built.
#[derive(Debug, Clone, Copy)]
struct Boundary {
    /// Index into the atom list of the word the cut would start.
    atom: usize,
    /// Tokens accumulated in the segment before this boundary.
    tokens_before: usize,
    kind: BoundaryKind,
}

/// Splits `doc` into segments of at most `config.segment_size` tokens.
///
/// When a segment fills up, the cut is moved back to the best boundary
/// within a lookback window of 10% of the budget: paragraph breaks beat
/// sentence ends beat plain whitespace. A single word larger than the
/// whole budget is cut mid-word as a last resort.
pub fn segment_text(
    doc: &str,
    config: &PipelineConfig,
    counter: &dyn TokenCounter,
) -> Result<Vec<Segment>> {
    if doc.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let budget = config.segment_size;
    let window = (budget / 10).max(1);

    let mut atoms: Vec<Atom> = split_word_indices(doc)
        .map(|(offset, w)| Atom {
            offset,
            len: w.len(),
            cost: word_cost(w),
        })
        .collect();

    let mut cuts: Vec<usize> = Vec::new(); // byte offsets where new segments start
    let mut used = 0usize;
    let mut first_atom_of_seg = 0usize;
    let mut boundaries: Vec<Boundary> = Vec::new();

    let mut i = 0;
    while i < atoms.len() {
        let atom = atoms[i];
        if used + atom.cost <= budget {
            if i > first_atom_of_seg {
                boundaries.push(Boundary {
                    atom: i,
                    tokens_before: used,
                    kind: classify_boundary(doc, atoms[i - 1], atom),
                });
            }
            used += atom.cost;
            i += 1;
            continue;
        }
        // Atom `i` does not fit. Cut before it, or inside it if the
        // segment is still empty.
        if used == 0 {
            let word = &doc[atom.offset..atom.offset + atom.len];
            let keep_chars = budget * 6;
            let cut_in_word = word
                .char_indices()
                .nth(keep_chars)
                .map(|(b, _)| b)
                .expect("word exceeding the budget has more than budget*6 chars");
            let cut_byte = atom.offset + cut_in_word;
            cuts.push(cut_byte);
            // The remainder of the word becomes the first atom of the
            // next segment.
            let rest = &doc[cut_byte..atom.offset + atom.len];
            atoms[i] = Atom {
                offset: cut_byte,
                len: rest.len(),
                cost: word_cost(rest),
            };
            first_atom_of_seg = i;
            boundaries.clear();
            continue;
        }
        let cut_atom = pick_cut(&boundaries, used, window).unwrap_or(i);
        cuts.push(atoms[cut_atom].offset);
        first_atom_of_seg = cut_atom;
        used = 0;
        boundaries.clear();
        i = cut_atom; // atoms from the cut onward are refilled into the new segment
    }

    let mut segments = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0usize;
    for (index, &cut) in cuts.iter().enumerate() {
        let text = &doc[start..cut];
        segments.push(Segment {
            index,
            text: text.to_string(),
            token_count: counter.count(text),
        });
        start = cut;
    }
    let tail = &doc[start..];
    segments.push(Segment {
        index: cuts.len(),
        text: tail.to_string(),
        token_count: counter.count(tail),
    });
    Ok(segments)
}

/// Best boundary within `window` tokens of the current fill, preferring
/// paragraph over sentence cuts; `None` means cut right before the
/// overflowing atom (a plain whitespace cut).
fn pick_cut(boundaries: &[Boundary], used: usize, window: usize) -> Option<usize> {
    for wanted in [BoundaryKind::Paragraph, BoundaryKind::Sentence] {
        let hit = boundaries
            .iter()
            .rev()
            .take_while(|b| used - b.tokens_before <= window)
            .find(|b| b.kind == wanted);
        if let Some(b) = hit {
            return Some(b.atom);
        }
    }
    None
}

fn classify_boundary(doc: &str, prev: Atom, next: Atom) -> BoundaryKind {
    let gap = &doc[prev.offset + prev.len..next.offset];
    if gap.bytes().filter(|&b| b == b'\n').count() >= 2 {
        return BoundaryKind::Paragraph;
    }
    let prev_word = &doc[prev.offset..prev.offset + prev.len];
    let stripped = prev_word.trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}']);
    if stripped.ends_with(['.', '!', '?']) {
        return BoundaryKind::Sentence;
    }
    BoundaryKind::Whitespace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::ApproxCounter;
    use proptest::prelude::*;

    fn cfg(segment_size: usize) -> PipelineConfig {
        PipelineConfig {
            segment_size,
            ..PipelineConfig::default()
        }
    }

    fn join(segments: &[Segment]) -> String {
        segments.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn small_doc_is_one_segment() {
        // 500 whitespace-delimited short words stay well under a 3000
        // budget and come back as the document itself.
        let doc = vec!["word"; 500].join(" ");
        let segs = segment_text(&doc, &cfg(3000), &ApproxCounter).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].text, doc);
        assert_eq!(segs[0].index, 0);
        assert_eq!(segs[0].token_count, ApproxCounter.count(&doc));
    }

    #[test]
    fn empty_doc_is_rejected() {
        assert!(matches!(
            segment_text("", &cfg(3000), &ApproxCounter),
            Err(Error::EmptyDocument)
        ));
        assert!(matches!(
            segment_text("  \n\t ", &cfg(3000), &ApproxCounter),
            Err(Error::EmptyDocument)
        ));
    }

    #[test]
    fn uniform_sentences_split_into_three() {
        // ~7000 tokens of identical sentences against a 3000 budget.
        let sentence = "The quick brown fox jumps over the lazy dog today. "; // 10 words, 10 tokens
        let doc = sentence.repeat(700);
        let segs = segment_text(&doc, &cfg(3000), &ApproxCounter).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(join(&segs), doc);
        for s in &segs {
            assert!(
                s.token_count <= 3000,
                "segment {} over budget: {}",
                s.index,
                s.token_count
            );
        }
        // Cuts land on sentence boundaries: each non-final segment ends
        // with the sentence terminator plus the trailing space.
        for s in &segs[..segs.len() - 1] {
            assert!(s.text.ends_with(". "), "segment did not cut at a sentence");
        }
    }

    #[test]
    fn paragraph_break_beats_sentence_break() {
        // One paragraph break sits a few sentences before overflow; the
        // cut should move back to it rather than the nearer sentence end.
        // 26 sentences of 10 tokens, a paragraph break at token 260, then
        // more sentences. The fill overflows at 280 with window 28, so the
        // break (distance 20) and two sentence ends (distances 10, 0) are
        // all in range; the paragraph must win on kind, not distance.
        let sentence = "Nine brown foxes jump over one very lazy old dog. "; // 10 tokens
        let mut doc = sentence.repeat(26).trim_end().to_string();
        doc.push_str("\n\n");
        doc.push_str(&sentence.repeat(40));
        let segs = segment_text(&doc, &cfg(280), &ApproxCounter).unwrap();
        assert!(segs.len() >= 2);
        assert!(
            segs[0].text.ends_with("\n\n"),
            "first cut should land on the paragraph break, got tail {:?}",
            &segs[0].text[segs[0].text.len().saturating_sub(20)..]
        );
        assert_eq!(join(&segs), doc);
    }

    #[test]
    fn giant_word_gets_hard_cut() {
        let doc = "x".repeat(1200); // 200 tokens unbroken
        let segs = segment_text(&doc, &cfg(100), &ApproxCounter).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].text.len(), 600);
        assert_eq!(segs[0].token_count, 100);
        assert_eq!(join(&segs), doc);
    }

    #[test]
    fn trailing_whitespace_stays_with_last_segment() {
        let doc = format!("{} \n\n", vec!["tok"; 250].join(" "));
        let segs = segment_text(&doc, &cfg(100), &ApproxCounter).unwrap();
        assert_eq!(join(&segs), doc);
        assert!(segs.last().unwrap().text.ends_with("\n\n"));
    }

    #[test]
    fn indices_are_sequential() {
        let doc = vec!["alpha"; 1000].join(" ");
        let segs = segment_text(&doc, &cfg(100), &ApproxCounter).unwrap();
        for (i, s) in segs.iter().enumerate() {
            assert_eq!(s.index, i);
        }
    }

    /// Random documents mixing word lengths, punctuation and paragraph
    /// breaks; the generator occasionally emits giant unbroken words to
    /// exercise hard cuts.
    fn doc_strategy() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            4 => "[a-z]{1,12}",
            1 => "[a-z]{1,12}[.!?]",
            1 => "[a-z]{40,900}",
        ];
        let sep = prop_oneof![
            6 => Just(" ".to_string()),
            1 => Just("\n".to_string()),
            1 => Just("\n\n".to_string()),
            1 => Just("  \t".to_string()),
        ];
        (
            proptest::collection::vec((word, sep), 1..120),
            prop_oneof![Just(""), Just(" "), Just("\n\n")],
        )
            .prop_map(|(pairs, tail)| {
                let mut doc = String::new();
                for (w, s) in pairs {
                    doc.push_str(&w);
                    doc.push_str(&s);
                }
                doc.push_str(tail);
                doc
            })
            .prop_filter("doc must carry at least one word", |d| !d.trim().is_empty())
    }

    proptest! {
        #[test]
        fn reconstruction_is_lossless(doc in doc_strategy(), size in 100usize..400) {
            let segs = segment_text(&doc, &cfg(size), &ApproxCounter).unwrap();
            prop_assert_eq!(join(&segs), doc);
        }

        #[test]
        fn segments_respect_budget(doc in doc_strategy(), size in 100usize..400) {
            let segs = segment_text(&doc, &cfg(size), &ApproxCounter).unwrap();
            for s in &segs {
                prop_assert!(s.token_count <= size);
                prop_assert_eq!(s.token_count, ApproxCounter.count(&s.text));
            }
        }

        #[test]
        fn counts_are_stable_under_splitting(doc in doc_strategy(), size in 100usize..400) {
            let segs = segment_text(&doc, &cfg(size), &ApproxCounter).unwrap();
            let total: usize = segs.iter().map(|s| s.token_count).sum();
            let whole = ApproxCounter.count(&doc);
            prop_assert!(total >= whole);
            prop_assert!(total <= whole + segs.len());
        }

        #[test]
        fn non_final_segments_are_nonempty(doc in doc_strategy(), size in 100usize..400) {
            let segs = segment_text(&doc, &cfg(size), &ApproxCounter).unwrap();
            for s in &segs {
                prop_assert!(s.token_count >= 1);
            }
        }
    }
}
