//! Needle-in-a-haystack task generation: templated fact chains embedded
//! in generated filler text at controlled lengths and depths.
//!
//! The filler vocabulary shares no content words with the fact templates,
//! so a fact sentence can never appear in a document by accident and
//! exact substring search always recovers the needles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::OracleRegistry;
use crate::error::{Error, Result};
use crate::token::TokenCounter;

/// Context sizes the harness is calibrated for, in tokens. 0 means a
/// document of the facts alone.
pub const VALID_TARGETS: &[usize] = &[0, 4096, 8192, 16384, 32768, 65536, 131072];

/// Shape of the reasoning chain a task requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    /// One fact answers the question directly.
    SingleFact,
    /// An object transfer plus a movement must be chained.
    TwoFact,
    /// Two movements plus a transfer; the question asks about the
    /// intermediate stop.
    ThreeFact,
}

impl TaskKind {
    pub fn all() -> [TaskKind; 3] {
        [TaskKind::SingleFact, TaskKind::TwoFact, TaskKind::ThreeFact]
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "single" | "singlefact" => Ok(TaskKind::SingleFact),
            "two" | "twofact" => Ok(TaskKind::TwoFact),
            "three" | "threefact" => Ok(TaskKind::ThreeFact),
            other => Err(format!("unknown task kind `{other}`")),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskKind::SingleFact => "single",
            TaskKind::TwoFact => "two",
            TaskKind::ThreeFact => "three",
        };
        f.write_str(s)
    }
}

/// One generated QA item. The document is not stored: it is fully
/// determined by the facts, depths, target length and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaystackTask {
    /// Needle sentences in document order.
    pub facts: Vec<String>,
    pub question: String,
    pub gold_answer: String,
    /// Indices of the facts whose presence is needed to answer.
    pub required_facts: Vec<usize>,
    pub target_tokens: usize,
    /// Relative positions in [0,1], ascending, one per fact.
    pub depths: Vec<f64>,
    pub seed: u64,
}

impl HaystackTask {
    /// Oracle configuration equivalent to this task.
    pub fn registry(&self) -> OracleRegistry {
        OracleRegistry::new(
            self.facts.clone(),
            self.gold_answer.clone(),
            self.required_facts.clone(),
        )
    }
}

// Filler grammar. None of these words appear in fact templates, question
// templates, or the no-information reasoning patterns.
const NOISE_SUBJECTS: &[&str] = &[
    "The committee",
    "The council",
    "A visiting delegation",
    "The research group",
    "The planning board",
    "The festival crew",
    "The editorial team",
    "The survey unit",
];
const NOISE_VERBS: &[&str] = &[
    "reviewed",
    "discussed",
    "catalogued",
    "examined",
    "summarized",
    "postponed",
    "audited",
    "rehearsed",
];
const NOISE_OBJECTS: &[&str] = &[
    "the quarterly schedule",
    "the annual budget",
    "several archived reports",
    "the updated guidelines",
    "a revised proposal",
    "the exhibition layout",
    "the training materials",
    "the maintenance plan",
];
const NOISE_TAILS: &[&str] = &[
    "without much debate",
    "over several long meetings",
    "despite earlier objections",
    "with careful attention",
    "before the winter recess",
    "during the afternoon session",
    "in considerable detail",
    "under a tight deadline",
];

// Fact vocabulary.
const PEOPLE: &[&str] = &[
    "Mary", "John", "Sandra", "Daniel", "Emily", "Victor", "Nora", "Felix", "Priya", "Marcus",
    "Alice", "Hugo",
];
const PLACES: &[&str] = &[
    "bathroom", "hallway", "garden", "kitchen", "office", "bedroom", "cellar", "balcony",
    "workshop", "pantry",
];
const OBJECTS: &[&str] = &[
    "apple", "football", "notebook", "lantern", "violin", "teapot", "compass", "umbrella",
];
const MOVE_VERBS: &[&str] = &["moved to", "went to", "journeyed to", "travelled to"];
const TAKE_VERBS: &[&str] = &["took", "grabbed", "picked up"];

/// Grammatical filler text of at least `min_tokens` tokens, deterministic
/// under `seed`.
pub fn generate_noise_corpus(min_tokens: usize, seed: u64, counter: &dyn TokenCounter) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = String::new();
    let mut tokens = 0usize;
    while tokens < min_tokens {
        let sentence = format!(
            "{} {} {} {}.",
            NOISE_SUBJECTS[rng.random_range(0..NOISE_SUBJECTS.len())],
            NOISE_VERBS[rng.random_range(0..NOISE_VERBS.len())],
            NOISE_OBJECTS[rng.random_range(0..NOISE_OBJECTS.len())],
            NOISE_TAILS[rng.random_range(0..NOISE_TAILS.len())],
        );
        tokens += counter.count(&sentence);
        if !corpus.is_empty() {
            corpus.push(' ');
        }
        corpus.push_str(&sentence);
    }
    corpus
}

/// Embeds the task's facts into `noise_corpus` at their depths.
///
/// The document is assembled sentence by sentence; fact i is inserted at
/// the first sentence boundary at or past `depth_i * target_tokens`, so
/// its actual offset overshoots by less than one filler sentence. The
/// total length lands within ±2% of the target.
pub fn build_haystack(
    task: &HaystackTask,
    noise_corpus: &str,
    counter: &dyn TokenCounter,
) -> Result<String> {
    debug_assert_eq!(task.depths.len(), task.facts.len());
    if task.target_tokens == 0 {
        return Ok(task.facts.join(" "));
    }
    let corpus_tokens = counter.count(noise_corpus);
    if corpus_tokens < task.target_tokens {
        return Err(Error::NoiseTooShort {
            corpus_tokens,
            target_tokens: task.target_tokens,
        });
    }

    let fact_tokens: usize = task.facts.iter().map(|f| counter.count(f)).sum();
    let noise_budget = task.target_tokens.saturating_sub(fact_tokens);
    // Rotate the corpus so different seeds read different filler, then
    // cycle; the length precondition guarantees enough material.
    let sentences: Vec<&str> = split_sentences(noise_corpus);
    debug_assert!(!sentences.is_empty());
    let start = (task.seed as usize) % sentences.len();

    let mut doc = String::new();
    let mut tokens = 0usize;
    let mut noise_used = 0usize;
    let mut next_fact = 0usize;
    let mut cursor = start;
    let push = |doc: &mut String, text: &str| {
        if !doc.is_empty() {
            doc.push(' ');
        }
        doc.push_str(text);
    };
    while noise_used < noise_budget || next_fact < task.facts.len() {
        while next_fact < task.facts.len()
            && tokens as f64 >= task.depths[next_fact] * task.target_tokens as f64
        {
            let fact = &task.facts[next_fact];
            push(&mut doc, fact);
            tokens += counter.count(fact);
            next_fact += 1;
        }
        if noise_used >= noise_budget {
            // Only trailing facts are left; place them now.
            while next_fact < task.facts.len() {
                push(&mut doc, &task.facts[next_fact]);
                next_fact += 1;
            }
            break;
        }
        let sentence = sentences[cursor];
        cursor = (cursor + 1) % sentences.len();
        push(&mut doc, sentence);
        let cost = counter.count(sentence);
        tokens += cost;
        noise_used += cost;
    }
    Ok(doc)
}

/// Splits text into trimmed sentences at `.` boundaries.
fn split_sentences(text: &str) -> Vec<&str> {
    text.split_inclusive('.')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// The document for a task: builds the noise from the task's own seed
/// unless an explicit corpus is supplied.
pub fn task_document(
    task: &HaystackTask,
    corpus: Option<&str>,
    counter: &dyn TokenCounter,
) -> Result<String> {
    match corpus {
        Some(c) => build_haystack(task, c, counter),
        None => {
            if task.target_tokens == 0 {
                return build_haystack(task, "", counter);
            }
            // Slack beyond the target keeps the length precondition true
            // after rotation.
            let generated = generate_noise_corpus(task.target_tokens + 64, task.seed, counter);
            build_haystack(task, &generated, counter)
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Generates `n_items` distinct tasks of one kind at one length.
///
/// Depths default to even spacing with a small seed-derived jitter;
/// the jitter never reorders facts.
pub fn make_task_suite(
    kind: TaskKind,
    n_items: usize,
    target_tokens: usize,
    seed: u64,
) -> Vec<HaystackTask> {
    debug_assert!(n_items >= 1);
    let mut tasks = Vec::with_capacity(n_items);
    let mut seen = std::collections::HashSet::new();
    for index in 0..n_items {
        let item_seed = splitmix64(seed ^ ((index as u64 + 1) << 32));
        let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
        // Redraw on a duplicate question/fact combination; pools are far
        // larger than any reasonable n_items, but cap the loop anyway.
        let mut task = instantiate(kind, target_tokens, item_seed, &mut rng);
        for _ in 0..1000 {
            if seen.insert((task.question.clone(), task.facts.clone())) {
                break;
            }
            task = instantiate(kind, target_tokens, item_seed, &mut rng);
        }
        tasks.push(task);
    }
    tasks
}

fn instantiate(
    kind: TaskKind,
    target_tokens: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> HaystackTask {
    let pick = |rng: &mut ChaCha8Rng, pool: &[&str]| -> String {
        pool[rng.random_range(0..pool.len())].to_string()
    };
    let person = pick(rng, PEOPLE);
    let (facts, question, gold_answer, required_facts) = match kind {
        TaskKind::SingleFact => {
            let place = pick(rng, PLACES);
            let verb = pick(rng, MOVE_VERBS);
            (
                vec![format!("{person} {verb} the {place}.")],
                format!("Where is {person}?"),
                place,
                vec![0],
            )
        }
        TaskKind::TwoFact => {
            let object = pick(rng, OBJECTS);
            let place = pick(rng, PLACES);
            let take = pick(rng, TAKE_VERBS);
            let verb = pick(rng, MOVE_VERBS);
            (
                vec![
                    format!("{person} {take} the {object}."),
                    format!("{person} {verb} the {place}."),
                ],
                format!("Where is the {object}?"),
                place,
                vec![0, 1],
            )
        }
        TaskKind::ThreeFact => {
            let object = pick(rng, OBJECTS);
            let first = pick(rng, PLACES);
            let second = loop {
                let p = pick(rng, PLACES);
                if p != first {
                    break p;
                }
            };
            let take = pick(rng, TAKE_VERBS);
            let verb1 = pick(rng, MOVE_VERBS);
            let verb2 = pick(rng, MOVE_VERBS);
            (
                vec![
                    format!("{person} {take} the {object}."),
                    format!("{person} {verb1} the {first}."),
                    format!("{person} {verb2} the {second}."),
                ],
                format!("Where was the {object} before the {second}?"),
                first,
                vec![0, 1, 2],
            )
        }
    };
    let k = facts.len();
    let depths = (0..k)
        .map(|i| {
            let base = (i as f64 + 1.0) / (k as f64 + 1.0);
            let jitter = (rng.random_range(-100..=100) as f64) / 1000.0 * 0.5;
            (base + jitter).clamp(0.02, 0.98)
        })
        .collect();
    HaystackTask {
        facts,
        question,
        gold_answer,
        required_facts,
        target_tokens,
        depths,
        seed,
    }
}

/// One task per line as JSON.
pub fn write_tasks_jsonl<W: std::io::Write>(tasks: &[HaystackTask], mut writer: W) -> Result<()> {
    for task in tasks {
        let line = serde_json::to_string(task).expect("tasks serialize infallibly");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_tasks_jsonl(text: &str) -> Result<Vec<HaystackTask>> {
    let mut tasks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: HaystackTask = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            reason: format!("bad task record: {e}"),
        })?;
        tasks.push(task);
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::ApproxCounter;
    use proptest::prelude::*;

    fn single_task(target: usize, depth: f64, seed: u64) -> HaystackTask {
        HaystackTask {
            facts: vec!["Mary moved to the bathroom.".to_string()],
            question: "Where is Mary?".to_string(),
            gold_answer: "bathroom".to_string(),
            required_facts: vec![0],
            target_tokens: target,
            depths: vec![depth],
            seed,
        }
    }

    #[test]
    fn zero_target_is_facts_only() {
        let mut task = single_task(0, 0.5, 1);
        task.facts.push("John went to the hallway.".to_string());
        task.depths.push(0.9);
        let doc = build_haystack(&task, "irrelevant corpus.", &ApproxCounter).unwrap();
        assert_eq!(doc, "Mary moved to the bathroom. John went to the hallway.");
    }

    #[test]
    fn short_corpus_is_rejected() {
        let task = single_task(4096, 0.5, 1);
        let corpus = generate_noise_corpus(100, 7, &ApproxCounter);
        match build_haystack(&task, &corpus, &ApproxCounter) {
            Err(Error::NoiseTooShort { target_tokens, .. }) => assert_eq!(target_tokens, 4096),
            other => panic!("expected NoiseTooShort, got {other:?}"),
        }
    }

    #[test]
    fn fact_lands_near_requested_depth() {
        let task = single_task(4096, 0.5, 42);
        let corpus = generate_noise_corpus(4200, 42, &ApproxCounter);
        let doc = build_haystack(&task, &corpus, &ApproxCounter).unwrap();
        let at = doc.find(&task.facts[0]).expect("fact must be present");
        let before_tokens = ApproxCounter.count(&doc[..at]);
        let low = (0.45 * 4096.0) as usize;
        let high = (0.55 * 4096.0) as usize;
        assert!(
            (low..=high).contains(&before_tokens),
            "fact at {before_tokens} tokens, wanted [{low}, {high}]"
        );
    }

    #[test]
    fn document_length_within_tolerance() {
        for &target in &[4096usize, 8192, 16384] {
            let task = single_task(target, 0.3, 9);
            let corpus = generate_noise_corpus(target + 64, 9, &ApproxCounter);
            let doc = build_haystack(&task, &corpus, &ApproxCounter).unwrap();
            let total = ApproxCounter.count(&doc);
            let tolerance = (target as f64 * 0.02) as usize;
            assert!(
                total.abs_diff(target) <= tolerance,
                "doc {total} tokens vs target {target}"
            );
        }
    }

    #[test]
    fn facts_appear_in_order_exactly_once() {
        let mut task = single_task(8192, 0.1, 3);
        task.facts = vec![
            "Mary took the apple.".to_string(),
            "Mary moved to the garden.".to_string(),
            "Mary travelled to the cellar.".to_string(),
        ];
        task.depths = vec![0.1, 0.5, 0.9];
        let doc = task_document(&task, None, &ApproxCounter).unwrap();
        let mut last = 0;
        for fact in &task.facts {
            assert_eq!(
                doc.matches(fact.as_str()).count(),
                1,
                "fact duplicated or missing"
            );
            let at = doc.find(fact.as_str()).unwrap();
            assert!(at >= last, "facts out of order");
            last = at;
        }
    }

    #[test]
    fn documents_are_deterministic() {
        let task = single_task(4096, 0.5, 1234);
        let a = task_document(&task, None, &ApproxCounter).unwrap();
        let b = task_document(&task, None, &ApproxCounter).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = task_document(&single_task(4096, 0.5, 1), None, &ApproxCounter).unwrap();
        let b = task_document(&single_task(4096, 0.5, 2), None, &ApproxCounter).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn noise_never_contains_fact_vocabulary() {
        let corpus = generate_noise_corpus(20_000, 5, &ApproxCounter);
        let lower = corpus.to_lowercase();
        for word in PEOPLE.iter().chain(PLACES).chain(OBJECTS) {
            assert!(
                !lower.contains(&word.to_lowercase()),
                "noise contains fact word {word}"
            );
        }
        for pattern in ["no information", "no relevant information", "not mentioned"] {
            assert!(!lower.contains(pattern));
        }
    }

    #[test]
    fn suite_has_distinct_items_and_requested_shape() {
        for kind in TaskKind::all() {
            let tasks = make_task_suite(kind, 25, 4096, 77);
            assert_eq!(tasks.len(), 25);
            let unique: std::collections::HashSet<_> = tasks
                .iter()
                .map(|t| (t.question.clone(), t.facts.clone()))
                .collect();
            assert_eq!(unique.len(), 25, "{kind} items not distinct");
            for task in &tasks {
                let expected = match kind {
                    TaskKind::SingleFact => 1,
                    TaskKind::TwoFact => 2,
                    TaskKind::ThreeFact => 3,
                };
                assert_eq!(task.facts.len(), expected);
                assert_eq!(task.depths.len(), expected);
                assert!(
                    task.depths.windows(2).all(|w| w[0] <= w[1]),
                    "depths not ascending"
                );
                assert_eq!(task.gold_answer.split_whitespace().count(), 1);
                assert!(!task.required_facts.is_empty());
            }
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let a = make_task_suite(TaskKind::TwoFact, 10, 8192, 9);
        let b = make_task_suite(TaskKind::TwoFact, 10, 8192, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn three_fact_question_names_final_place() {
        let tasks = make_task_suite(TaskKind::ThreeFact, 10, 0, 5);
        for task in tasks {
            // Gold is the intermediate stop, not the final one.
            let final_place = task.facts[2]
                .rsplit(' ')
                .next()
                .unwrap()
                .trim_end_matches('.');
            assert!(task.question.contains(final_place));
            assert!(task.facts[1].contains(&task.gold_answer));
            assert_ne!(task.gold_answer, final_place);
        }
    }

    #[test]
    fn tasks_round_trip_through_jsonl() {
        let tasks = make_task_suite(TaskKind::SingleFact, 5, 4096, 11);
        let mut buf = Vec::new();
        write_tasks_jsonl(&tasks, &mut buf).unwrap();
        let back = read_tasks_jsonl(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(back, tasks);
    }

    #[test]
    fn malformed_task_line_is_reported() {
        let err = read_tasks_jsonl("not json\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn needles_always_recoverable(
            kind_index in 0usize..3,
            target_index in 1usize..VALID_TARGETS.len().min(4),
            seed in 0u64..10_000,
        ) {
            let kind = TaskKind::all()[kind_index];
            let target = VALID_TARGETS[target_index];
            let task = &make_task_suite(kind, 1, target, seed)[0];
            let doc = task_document(task, None, &ApproxCounter).unwrap();
            for fact in &task.facts {
                prop_assert_eq!(doc.matches(fact.as_str()).count(), 1);
            }
        }
    }
}
