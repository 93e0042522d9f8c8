//! Scoring and batch evaluation: EM/F1 metrics, the eval runner, an
//! optional model judge, and sweep harnesses over config dimensions.

use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendRequest, OracleBackend, Stage};
use crate::config::{Mode, PipelineConfig};
use crate::error::{Error, Result};
use crate::haystack::{task_document, HaystackTask};
use crate::pipeline::Pipeline;
use crate::prompt::{PromptTemplates, Template};
use crate::token::TokenCounter;
use crate::trace::TraceStats;

/// Lowercases, strips punctuation, drops the articles "a", "an", "the",
/// and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 iff the normalized strings are equal.
pub fn exact_match(pred: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(pred) == normalize_answer(gold))
}

/// Case- and punctuation-normalized tokens. Articles stay: F1 measures
/// token overlap, and dropping words would skew precision and recall.
fn f1_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Multiset token overlap F1 on normalized tokens. Both empty scores 1,
/// exactly one empty scores 0.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p_tokens = f1_tokens(pred);
    let g_tokens = f1_tokens(gold);
    match (p_tokens.is_empty(), g_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts = std::collections::HashMap::new();
    for t in &g_tokens {
        *counts.entry(t.as_str()).or_insert(0usize) += 1;
    }
    let mut overlap = 0usize;
    for t in &p_tokens {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p_tokens.len() as f64;
    let recall = overlap as f64 / g_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Outcome of one evaluated task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    pub question: String,
    pub prediction: String,
    pub gold: String,
    pub em: u8,
    pub f1: f64,
    /// Score in [0, 100] when a judge pass ran and parsed.
    pub judge_score: Option<f64>,
    /// Set when the judge responded but no score could be extracted.
    pub judge_unparsed: bool,
    pub target_tokens: usize,
    /// Set when the pipeline errored; em and f1 then score 0.
    pub failed: bool,
    pub error: Option<String>,
    pub trace_stats: TraceStats,
}

/// Per-length-cell aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub target_tokens: usize,
    pub items: usize,
    pub mean_em: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub items: usize,
    pub failed: usize,
    pub mean_em: f64,
    pub mean_f1: f64,
    pub mean_judge: Option<f64>,
    pub cells: Vec<CellSummary>,
}

/// Supplies the backend for each task. The oracle needs a registry built
/// from the task itself; an HTTP backend is shared across all tasks.
pub trait BackendProvider: Send + Sync {
    fn backend_for(&self, task: &HaystackTask) -> Result<Arc<dyn Backend>>;
}

/// Builds a fresh scripted oracle per task from the task's own facts.
pub struct OracleProvider;

impl BackendProvider for OracleProvider {
    fn backend_for(&self, task: &HaystackTask) -> Result<Arc<dyn Backend>> {
        Ok(Arc::new(OracleBackend::new(task.registry())))
    }
}

/// Hands every task the same backend.
pub struct SharedProvider(pub Arc<dyn Backend>);

impl BackendProvider for SharedProvider {
    fn backend_for(&self, _task: &HaystackTask) -> Result<Arc<dyn Backend>> {
        Ok(self.0.clone())
    }
}

fn kind_label(task: &HaystackTask) -> String {
    match task.facts.len() {
        1 => "single".to_string(),
        2 => "two".to_string(),
        3 => "three".to_string(),
        n => format!("custom{n}"),
    }
}

fn task_id(task: &HaystackTask, index: usize) -> String {
    format!("{}-{}-{:03}", kind_label(task), task.target_tokens, index)
}

async fn eval_one(
    task: HaystackTask,
    index: usize,
    config: PipelineConfig,
    backend: Arc<dyn Backend>,
    templates: PromptTemplates,
    counter: Arc<dyn TokenCounter>,
    noise_corpus: Option<String>,
) -> EvalRecord {
    let id = task_id(&task, index);
    let failed_record = |error: String| EvalRecord {
        task_id: id.clone(),
        question: task.question.clone(),
        prediction: String::new(),
        gold: task.gold_answer.clone(),
        em: 0,
        f1: 0.0,
        judge_score: None,
        judge_unparsed: false,
        target_tokens: task.target_tokens,
        failed: true,
        error: Some(error),
        trace_stats: TraceStats::default(),
    };

    let doc = match task_document(&task, noise_corpus.as_deref(), counter.as_ref()) {
        Ok(doc) => doc,
        Err(e) => return failed_record(e.to_string()),
    };
    let pipeline = match Pipeline::new(config, backend, templates, counter) {
        Ok(p) => p,
        Err(e) => return failed_record(e.to_string()),
    };
    match pipeline.run(&task.question, &doc).await {
        Ok(result) => {
            let trace_stats = result.stats();
            EvalRecord {
                task_id: id,
                question: task.question.clone(),
                em: exact_match(&result.answer, &task.gold_answer),
                f1: token_f1(&result.answer, &task.gold_answer),
                prediction: result.answer,
                gold: task.gold_answer.clone(),
                judge_score: None,
                judge_unparsed: false,
                target_tokens: task.target_tokens,
                failed: false,
                error: None,
                trace_stats,
            }
        }
        Err(e) => failed_record(e.to_string()),
    }
}

/// Runs the pipeline over every task and scores the answers. Task-level
/// parallelism is bounded by `config.parallelism`; records come back in
/// task order. Backend failures become failed records, never aborts.
pub async fn run_eval(
    tasks: &[HaystackTask],
    config: &PipelineConfig,
    provider: &dyn BackendProvider,
    templates: &PromptTemplates,
    counter: Arc<dyn TokenCounter>,
    noise_corpus: Option<&str>,
) -> Result<(Vec<EvalRecord>, EvalSummary)> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskSet);
    }
    let mut jobs = Vec::with_capacity(tasks.len());
    for (index, task) in tasks.iter().enumerate() {
        let backend = provider.backend_for(task)?;
        let task = task.clone();
        let config = config.clone();
        let templates = templates.clone();
        let counter = counter.clone();
        let noise = noise_corpus.map(str::to_string);
        jobs.push(async move {
            tokio::spawn(eval_one(
                task, index, config, backend, templates, counter, noise,
            ))
            .await
            .expect("eval task panicked")
        });
    }
    let records: Vec<EvalRecord> = stream::iter(jobs)
        .buffered(config.parallelism.max(1))
        .collect()
        .await;
    let summary = summarize(&records);
    Ok((records, summary))
}

/// Arithmetic means over all records, plus per-length cells.
pub fn summarize(records: &[EvalRecord]) -> EvalSummary {
    let items = records.len();
    let failed = records.iter().filter(|r| r.failed).count();
    let mean = |f: fn(&EvalRecord) -> f64| -> f64 {
        if items == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / items as f64
        }
    };
    let mean_em = mean(|r| r.em as f64);
    let mean_f1 = mean(|r| r.f1);
    let judged: Vec<f64> = records.iter().filter_map(|r| r.judge_score).collect();
    let mean_judge = if judged.is_empty() {
        None
    } else {
        Some(judged.iter().sum::<f64>() / judged.len() as f64)
    };

    let mut targets: Vec<usize> = records.iter().map(|r| r.target_tokens).collect();
    targets.sort_unstable();
    targets.dedup();
    let cells = targets
        .into_iter()
        .map(|t| {
            let cell: Vec<&EvalRecord> = records.iter().filter(|r| r.target_tokens == t).collect();
            let n = cell.len() as f64;
            CellSummary {
                target_tokens: t,
                items: cell.len(),
                mean_em: cell.iter().map(|r| r.em as f64).sum::<f64>() / n,
                mean_f1: cell.iter().map(|r| r.f1).sum::<f64>() / n,
            }
        })
        .collect();
    EvalSummary {
        items,
        failed,
        mean_em,
        mean_f1,
        mean_judge,
        cells,
    }
}

/// Judge prompt pair: free-scale scoring and the 4-choice verifier.
#[derive(Debug, Clone)]
pub struct JudgeTemplates {
    pub score: Template,
    pub choice: Template,
}

const JUDGE_SCORE_TEXT: &str = include_str!("../assets/judge_score.txt");
const JUDGE_CHOICE_TEXT: &str = include_str!("../assets/judge_choice.txt");
const JUDGE_SLOTS: &[&str] = &["question", "answer", "prediction"];

impl JudgeTemplates {
    pub fn builtin() -> Self {
        JudgeTemplates {
            score: Template::new("judge_score", JUDGE_SCORE_TEXT, JUDGE_SLOTS)
                .expect("embedded judge_score template is valid"),
            choice: Template::new("judge_choice", JUDGE_CHOICE_TEXT, JUDGE_SLOTS)
                .expect("embedded judge_choice template is valid"),
        }
    }
}

/// Which judge prompt to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeVariant {
    /// 0-100 quality score.
    Score,
    /// true/false verification for multiple-choice answers.
    Choice,
}

/// Extracts a 0-100 score from judge output: a number (optionally after
/// "Score ="), or the words true/false mapping to 100/0.
pub fn parse_judge_score(text: &str) -> Option<f64> {
    let lower = text.to_lowercase();
    let after_marker = lower.find("score").map(|i| &lower[i..]).unwrap_or(&lower);
    let digits: String = after_marker
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if let Ok(n) = digits.parse::<f64>() {
        if n <= 100.0 {
            return Some(n);
        }
    }
    for word in lower.split(|c: char| !c.is_alphanumeric()) {
        match word {
            "true" => return Some(100.0),
            "false" => return Some(0.0),
            _ => {}
        }
    }
    None
}

/// Scores each non-failed record with the judge backend, filling
/// `judge_score` (or `judge_unparsed` when extraction fails).
pub async fn run_judge_eval(
    records: &mut [EvalRecord],
    backend: &dyn Backend,
    judge: &JudgeTemplates,
    variant: JudgeVariant,
    temperature: f32,
) -> Result<()> {
    let template = match variant {
        JudgeVariant::Score => &judge.score,
        JudgeVariant::Choice => &judge.choice,
    };
    for record in records.iter_mut() {
        if record.failed {
            continue;
        }
        let prompt = template.render(&[
            ("question", record.question.as_str()),
            ("answer", record.gold.as_str()),
            ("prediction", record.prediction.as_str()),
        ]);
        let request = BackendRequest::new(Stage::Judge, prompt, temperature);
        let response = backend.complete(&request).await?;
        match parse_judge_score(&response.text) {
            Some(score) => {
                record.judge_score = Some(score);
                record.judge_unparsed = false;
            }
            None => {
                record.judge_score = None;
                record.judge_unparsed = true;
            }
        }
    }
    Ok(())
}

/// A config dimension to sweep with its values.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepSpec {
    SegmentSize(Vec<usize>),
    Mode(Vec<Mode>),
}

/// Aggregate backend cost of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SweepStats {
    pub gather_calls: usize,
    pub filter_calls: usize,
    pub merge_calls: usize,
    pub backend_calls: usize,
    pub total_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub summary: EvalSummary,
    pub stats: SweepStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub dimension: String,
    pub rows: Vec<SweepRow>,
}

fn accumulate_stats(records: &[EvalRecord]) -> SweepStats {
    let mut stats = SweepStats::default();
    for r in records {
        stats.gather_calls += r.trace_stats.gather_calls;
        stats.filter_calls += r.trace_stats.filter_calls;
        stats.merge_calls += r.trace_stats.merge_calls;
        stats.backend_calls += r.trace_stats.backend_calls;
        stats.total_tokens += r.trace_stats.total_tokens;
    }
    stats
}

/// Runs the whole eval once per value of the swept dimension.
pub async fn run_sweep(
    spec: &SweepSpec,
    tasks: &[HaystackTask],
    base_config: &PipelineConfig,
    provider: &dyn BackendProvider,
    templates: &PromptTemplates,
    counter: Arc<dyn TokenCounter>,
    noise_corpus: Option<&str>,
) -> Result<SweepReport> {
    let (dimension, configs): (&str, Vec<(String, PipelineConfig)>) = match spec {
        SweepSpec::SegmentSize(values) => (
            "segment_size",
            values
                .iter()
                .map(|&v| {
                    let mut c = base_config.clone();
                    c.segment_size = v;
                    (v.to_string(), c)
                })
                .collect(),
        ),
        SweepSpec::Mode(values) => (
            "mode",
            values
                .iter()
                .map(|&v| {
                    let mut c = base_config.clone();
                    c.mode = v;
                    (v.to_string(), c)
                })
                .collect(),
        ),
    };
    if configs.is_empty() {
        return Err(Error::ConfigInvalid {
            field: "sweep_values",
            reason: "at least one value is required".to_string(),
        });
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (label, config) in configs {
        let (records, summary) = run_eval(
            tasks,
            &config,
            provider,
            templates,
            counter.clone(),
            noise_corpus,
        )
        .await?;
        rows.push(SweepRow {
            label,
            summary,
            stats: accumulate_stats(&records),
        });
    }
    Ok(SweepReport {
        dimension: dimension.to_string(),
        rows,
    })
}

/// One record per line as JSON.
pub fn write_records_jsonl<W: std::io::Write>(records: &[EvalRecord], mut writer: W) -> Result<()> {
    for record in records {
        let line = serde_json::to_string(record).expect("records serialize infallibly");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Aligned-column text summary.
pub fn format_summary(summary: &EvalSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "items {}  failed {}  mean_em {:.4}  mean_f1 {:.4}",
        summary.items, summary.failed, summary.mean_em, summary.mean_f1
    ));
    if let Some(j) = summary.mean_judge {
        out.push_str(&format!("  mean_judge {j:.2}"));
    }
    out.push('\n');
    if summary.cells.len() > 1 {
        out.push_str(&format!(
            "{:>10} {:>6} {:>8} {:>8}\n",
            "tokens", "items", "em", "f1"
        ));
        for cell in &summary.cells {
            out.push_str(&format!(
                "{:>10} {:>6} {:>8.4} {:>8.4}\n",
                cell.target_tokens, cell.items, cell.mean_em, cell.mean_f1
            ));
        }
    }
    out
}

/// Aligned-column sweep table.
pub fn format_sweep(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>16} {:>8} {:>8} {:>8} {:>10} {:>10} {:>12}\n",
        report.dimension, "em", "f1", "failed", "gather", "backend", "tokens"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:>16} {:>8.4} {:>8.4} {:>8} {:>10} {:>10} {:>12}\n",
            row.label,
            row.summary.mean_em,
            row.summary.mean_f1,
            row.summary.failed,
            row.stats.gather_calls,
            row.stats.backend_calls,
            row.stats.total_tokens
        ));
    }
    out
}

/// Sweep table as CSV.
pub fn sweep_to_csv(report: &SweepReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{},mean_em,mean_f1,failed,gather_calls,filter_calls,merge_calls,backend_calls,total_tokens\n",
        report.dimension
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.label,
            row.summary.mean_em,
            row.summary.mean_f1,
            row.summary.failed,
            row.stats.gather_calls,
            row.stats.filter_calls,
            row.stats.merge_calls,
            row.stats.backend_calls,
            row.stats.total_tokens
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendResponse;
    use crate::haystack::{make_task_suite, TaskKind};
    use crate::token::ApproxCounter;
    use async_trait::async_trait;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Bathroom."), "bathroom");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("a  b"), "b");
        assert_eq!(normalize_answer("An Apple, a Day"), "apple day");
    }

    #[test]
    fn exact_match_examples() {
        assert_eq!(exact_match("bathroom", "Bathroom."), 1);
        assert_eq!(exact_match("", "x"), 0);
        assert_eq!(exact_match("garden party", "garden"), 0);
    }

    #[test]
    fn f1_examples() {
        assert!((token_f1("a b c", "b c d") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(token_f1("same words", "same words"), 1.0);
        assert_eq!(token_f1("alpha", "beta"), 0.0);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("x", ""), 0.0);
        assert_eq!(token_f1("", "x"), 0.0);
    }

    #[test]
    fn f1_is_symmetric_and_bounded() {
        let cases = [
            ("one two", "two three four"),
            ("a b c", "c"),
            ("x y", "x y"),
        ];
        for (a, b) in cases {
            let ab = token_f1(a, b);
            let ba = token_f1(b, a);
            assert!((ab - ba).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn em_implies_f1_one() {
        for (p, g) in [("Bathroom.", "bathroom"), ("Garden Path!", "garden path")] {
            assert_eq!(exact_match(p, g), 1);
            assert_eq!(token_f1(p, g), 1.0);
        }
    }

    #[test]
    fn judge_score_parsing() {
        assert_eq!(parse_judge_score("Score = 85"), Some(85.0));
        assert_eq!(parse_judge_score("Score = 100"), Some(100.0));
        assert_eq!(parse_judge_score("I give this 40 points"), Some(40.0));
        assert_eq!(parse_judge_score("true"), Some(100.0));
        assert_eq!(parse_judge_score("False."), Some(0.0));
        assert_eq!(parse_judge_score("no number in sight"), None);
        assert_eq!(parse_judge_score(""), None);
    }

    #[tokio::test]
    async fn eval_oracle_single_fact_cell_is_perfect() {
        let tasks = make_task_suite(TaskKind::SingleFact, 5, 4096, 3);
        let config = PipelineConfig::default();
        let (records, summary) = run_eval(
            &tasks,
            &config,
            &OracleProvider,
            &PromptTemplates::builtin(),
            Arc::new(ApproxCounter),
            None,
        )
        .await
        .unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(summary.mean_em, 1.0);
        assert_eq!(summary.mean_f1, 1.0);
        assert_eq!(summary.failed, 0);
        for r in &records {
            assert_eq!(r.em, 1);
            assert!(r.trace_stats.backend_calls > 0);
        }
    }

    #[tokio::test]
    async fn eval_empty_task_set_errors() {
        let config = PipelineConfig::default();
        let result = run_eval(
            &[],
            &config,
            &OracleProvider,
            &PromptTemplates::builtin(),
            Arc::new(ApproxCounter),
            None,
        )
        .await;
        assert!(matches!(result, Err(Error::EmptyTaskSet)));
    }

    /// Backend that always fails, standing in for an unreachable server.
    struct DeadBackend;

    #[async_trait]
    impl Backend for DeadBackend {
        fn name(&self) -> &str {
            "dead"
        }

        async fn complete(&self, _request: &BackendRequest) -> Result<BackendResponse> {
            Err(Error::BackendUnavailable {
                attempts: 4,
                reason: "connection refused".to_string(),
            })
        }
    }

    #[tokio::test]
    async fn eval_counts_failed_items_without_aborting() {
        let tasks = make_task_suite(TaskKind::SingleFact, 3, 0, 3);
        let config = PipelineConfig::default();
        let (records, summary) = run_eval(
            &tasks,
            &config,
            &SharedProvider(Arc::new(DeadBackend)),
            &PromptTemplates::builtin(),
            Arc::new(ApproxCounter),
            None,
        )
        .await
        .unwrap();
        assert_eq!(summary.failed, 3);
        assert_eq!(summary.mean_em, 0.0);
        for r in &records {
            assert!(r.failed);
            assert!(r.error.as_deref().unwrap_or("").contains("unavailable"));
        }
    }

    #[tokio::test]
    async fn judge_pass_scores_oracle_records() {
        let tasks = make_task_suite(TaskKind::SingleFact, 4, 0, 8);
        let config = PipelineConfig::default();
        let (mut records, _) = run_eval(
            &tasks,
            &config,
            &OracleProvider,
            &PromptTemplates::builtin(),
            Arc::new(ApproxCounter),
            None,
        )
        .await
        .unwrap();
        let judge_backend = OracleBackend::new(tasks[0].registry());
        run_judge_eval(
            &mut records,
            &judge_backend,
            &JudgeTemplates::builtin(),
            JudgeVariant::Score,
            0.0,
        )
        .await
        .unwrap();
        for r in &records {
            assert_eq!(
                r.judge_score,
                Some(100.0),
                "record {} not judged perfect",
                r.task_id
            );
            assert!(!r.judge_unparsed);
        }
        let summary = summarize(&records);
        assert_eq!(summary.mean_judge, Some(100.0));
    }

    #[tokio::test]
    async fn sweep_over_modes_has_four_rows() {
        let tasks = make_task_suite(TaskKind::SingleFact, 2, 4096, 5);
        let spec = SweepSpec::Mode(vec![
            Mode::Full,
            Mode::NoLabel,
            Mode::NoStructure,
            Mode::Normal,
        ]);
        let report = run_sweep(
            &spec,
            &tasks,
            &PipelineConfig::default(),
            &OracleProvider,
            &PromptTemplates::builtin(),
            Arc::new(ApproxCounter),
            None,
        )
        .await
        .unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(
            report.rows[1].stats.filter_calls, 0,
            "no-label row must not filter"
        );
        assert_eq!(
            report.rows[3].stats.filter_calls, 0,
            "normal row must not filter"
        );
        for row in &report.rows {
            assert_eq!(row.summary.mean_em, 1.0, "mode {} missed", row.label);
        }
    }

    #[tokio::test]
    async fn sweep_empty_values_error() {
        let tasks = make_task_suite(TaskKind::SingleFact, 1, 0, 5);
        let result = run_sweep(
            &SweepSpec::SegmentSize(vec![]),
            &tasks,
            &PipelineConfig::default(),
            &OracleProvider,
            &PromptTemplates::builtin(),
            Arc::new(ApproxCounter),
            None,
        )
        .await;
        assert!(matches!(
            result,
            Err(Error::ConfigInvalid {
                field: "sweep_values",
                ..
            })
        ));
    }

    #[test]
    fn reports_serialize_deterministically() {
        let record = EvalRecord {
            task_id: "single-0-000".to_string(),
            question: "Where is Mary?".to_string(),
            prediction: "bathroom".to_string(),
            gold: "bathroom".to_string(),
            em: 1,
            f1: 1.0,
            judge_score: None,
            judge_unparsed: false,
            target_tokens: 0,
            failed: false,
            error: None,
            trace_stats: TraceStats::default(),
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_records_jsonl(std::slice::from_ref(&record), &mut a).unwrap();
        write_records_jsonl(&[record], &mut b).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let report = SweepReport {
            dimension: "segment_size".to_string(),
            rows: vec![SweepRow {
                label: "1000".to_string(),
                summary: summarize(&[]),
                stats: SweepStats::default(),
            }],
        };
        let csv = sweep_to_csv(&report);
        assert!(csv.starts_with("segment_size,mean_em"));
        assert_eq!(csv.lines().count(), 2);
    }
}
