//! segplus command line: ask a question over a long document, run batch
//! evals, generate haystack task suites, sweep config dimensions, and
//! inspect run traces.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use segplus::{
    format_summary, format_sweep, read_tasks_jsonl, read_trace_jsonl, run_eval, run_judge_eval,
    run_pipeline, run_sweep, sweep_to_csv, task_document, write_records_jsonl, write_tasks_jsonl,
    write_trace_jsonl, ApproxCounter, Backend, BackendProvider, EvidenceMerge, HttpBackend,
    HttpBackendConfig, JudgeTemplates, JudgeVariant, Mode, OracleBackend, OracleProvider,
    OracleRegistry, PipelineConfig, PromptTemplates, SharedProvider, SweepSpec, TaskKind,
    TokenCounter, TraceEvent, VALID_TARGETS,
};

#[derive(Parser)]
#[command(
    name = "segplus",
    version,
    about = "Question answering over documents longer than the model's context window"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question over one document.
    Ask(AskArgs),
    /// Run the pipeline over a task file and score the answers.
    Eval(EvalArgs),
    /// Generate needle-in-a-haystack tasks and their documents.
    #[command(name = "haystack-gen")]
    HaystackGen(GenArgs),
    /// Run the eval once per value of a config dimension.
    Sweep(SweepArgs),
    /// Pretty-print a trace file stage by stage.
    #[command(name = "trace-view")]
    TraceView(TraceViewArgs),
}

/// Flags shared by every pipeline-running command. Precedence is
/// flags > config file > built-in defaults.
#[derive(Args)]
struct CommonArgs {
    /// Backend: "oracle" (offline, scripted) or "http" (OpenAI-style).
    #[arg(long, default_value = "oracle")]
    backend: String,
    /// Model name sent to the HTTP backend.
    #[arg(long, default_value = "gpt-3.5-turbo")]
    model: String,
    /// Segment size in tokens.
    #[arg(long)]
    segment_size: Option<usize>,
    /// Token budget for one merge batch.
    #[arg(long = "merge-budget")]
    merge_budget: Option<usize>,
    /// Final context limit the last note must fit under.
    #[arg(long = "final-limit")]
    final_limit: Option<usize>,
    /// Pipeline mode: full, no-label, no-structure, or normal.
    #[arg(long)]
    mode: Option<String>,
    /// Evidence merge strategy: model or concat.
    #[arg(long = "evidence-merge")]
    evidence_merge: Option<String>,
    /// Concurrent backend calls.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Seed for anything randomized.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct AskArgs {
    /// Document file to read.
    #[arg(long)]
    doc: PathBuf,
    /// Question to answer.
    #[arg(long)]
    question: String,
    /// Oracle fact registry (JSON), required with the oracle backend.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Write the run trace to this JSONL file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Task file (JSONL, one task per line).
    #[arg(long)]
    tasks: PathBuf,
    /// Write per-task records to this JSONL file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score answers with a model judge: "score" or "choice".
    #[arg(long)]
    judge: Option<String>,
    /// Reuse this noise corpus file instead of regenerating per task.
    #[arg(long = "noise-corpus")]
    noise_corpus: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct GenArgs {
    /// Task kind: single, two, or three.
    #[arg(long)]
    kind: String,
    /// Comma-separated document lengths in tokens.
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    /// Items per length.
    #[arg(long, default_value_t = 25)]
    items: usize,
    /// Seed for task generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for tasks.jsonl and the document files.
    #[arg(long)]
    out: PathBuf,
    /// Skip writing the (large) document files.
    #[arg(long, default_value_t = false)]
    tasks_only: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Task file (JSONL, one task per line).
    #[arg(long)]
    tasks: PathBuf,
    /// Dimension to sweep: segment-size or mode.
    #[arg(long)]
    dimension: String,
    /// Comma-separated values for the dimension.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
    /// Write one row per line as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the sweep table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct TraceViewArgs {
    /// Trace file to pretty-print.
    #[arg(long)]
    trace: PathBuf,
}

/// Exit 1 for runtime/task failures, exit 2 for usage errors.
enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn failure(msg: impl Into<String>) -> Self {
        CliError::Failure(msg.into())
    }
}

impl From<segplus::Error> for CliError {
    fn from(e: segplus::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let outcome = runtime.block_on(async {
        match cli.command {
            Command::Ask(args) => cmd_ask(args).await,
            Command::Eval(args) => cmd_eval(args).await,
            Command::HaystackGen(args) => cmd_haystack_gen(args),
            Command::Sweep(args) => cmd_sweep(args).await,
            Command::TraceView(args) => cmd_trace_view(args),
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `segplus --help` for usage");
            ExitCode::from(2)
        }
    }
}

/// Builds the pipeline config from defaults, then the config file, then
/// explicit flags, and validates the result.
fn build_config(common: &CommonArgs) -> CliResult<PipelineConfig> {
    let mut config = PipelineConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        apply_config_file(&mut config, &text)?;
    }
    if let Some(v) = common.segment_size {
        config.segment_size = v;
    }
    if let Some(v) = common.merge_budget {
        config.max_merge_batch_tokens = v;
    }
    if let Some(v) = common.final_limit {
        config.final_context_limit = v;
    }
    if let Some(v) = &common.mode {
        config.mode = v.parse::<Mode>().map_err(CliError::Usage)?;
    }
    if let Some(v) = &common.evidence_merge {
        config.evidence_merge = v.parse::<EvidenceMerge>().map_err(CliError::Usage)?;
    }
    if let Some(v) = common.parallelism {
        config.parallelism = v;
    }
    segplus::validate_config(&config).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(config)
}

/// Flat key=value lines; blank lines and #-comments allowed.
fn apply_config_file(config: &mut PipelineConfig, text: &str) -> CliResult<()> {
    for (number, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| {
                CliError::usage(format!("config line {}: expected key = value", number + 1))
            })?;
        let bad = |e: String| CliError::usage(format!("config line {}: {e}", number + 1));
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|e| bad(format!("invalid number `{v}`: {e}")))
        };
        match key {
            "segment_size" => config.segment_size = parse_usize(value)?,
            "max_merge_batch_tokens" | "merge_budget" => {
                config.max_merge_batch_tokens = parse_usize(value)?
            }
            "final_context_limit" | "final_limit" => {
                config.final_context_limit = parse_usize(value)?
            }
            "prompt_overhead_reserve" => config.prompt_overhead_reserve = parse_usize(value)?,
            "max_iterations" => config.max_iterations = parse_usize(value)?,
            "parallelism" => config.parallelism = parse_usize(value)?,
            "mode" => config.mode = value.parse::<Mode>().map_err(bad)?,
            "evidence_merge" => {
                config.evidence_merge = value.parse::<EvidenceMerge>().map_err(bad)?
            }
            "temperature" => {
                config.temperature = value
                    .parse::<f32>()
                    .map_err(|e| bad(format!("invalid number `{v}`: {e}", v = value)))?
            }
            other => return Err(CliError::usage(format!("unknown config key `{other}`"))),
        }
    }
    Ok(())
}

fn load_templates(common: &CommonArgs) -> CliResult<PromptTemplates> {
    match &common.templates {
        Some(dir) => PromptTemplates::load_dir(dir).map_err(|e| CliError::usage(e.to_string())),
        None => Ok(PromptTemplates::builtin()),
    }
}

fn http_backend(common: &CommonArgs) -> CliResult<Arc<dyn Backend>> {
    let config = HttpBackendConfig::from_env(common.model.clone())
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(Arc::new(HttpBackend::new(config)?))
}

fn counter() -> Arc<dyn TokenCounter> {
    Arc::new(ApproxCounter)
}

fn read_file(path: &Path, what: &str) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::failure(format!("cannot read {what} {}: {e}", path.display())))
}

async fn cmd_ask(args: AskArgs) -> CliResult<()> {
    let config = build_config(&args.common)?;
    let templates = load_templates(&args.common)?;
    let doc = read_file(&args.doc, "document")?;
    let backend: Arc<dyn Backend> = match args.common.backend.as_str() {
        "http" => http_backend(&args.common)?,
        "oracle" => {
            let path = args.registry.as_ref().ok_or_else(|| {
                CliError::usage("the oracle backend needs --registry <facts.json>")
            })?;
            let registry: OracleRegistry = serde_json::from_str(&read_file(path, "registry")?)
                .map_err(|e| CliError::failure(format!("invalid registry: {e}")))?;
            Arc::new(OracleBackend::new(registry))
        }
        other => return Err(CliError::usage(format!("unknown backend `{other}`"))),
    };

    let result = run_pipeline(&args.question, &doc, config, backend, templates, counter()).await?;
    if let Some(path) = &args.trace {
        let file = fs::File::create(path)?;
        write_trace_jsonl(&result.trace, file).map_err(|e| CliError::failure(e.to_string()))?;
    }
    let stats = result.stats();
    println!("{}", result.answer);
    eprintln!(
        "calls {}  tokens {}  iterations {}  truncated {}",
        stats.backend_calls, stats.total_tokens, stats.iterations, stats.truncated
    );
    Ok(())
}

fn make_provider(common: &CommonArgs) -> CliResult<Box<dyn BackendProvider>> {
    match common.backend.as_str() {
        "oracle" => Ok(Box::new(OracleProvider)),
        "http" => Ok(Box::new(SharedProvider(http_backend(common)?))),
        other => Err(CliError::usage(format!("unknown backend `{other}`"))),
    }
}

async fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let config = build_config(&args.common)?;
    let templates = load_templates(&args.common)?;
    let tasks = read_tasks_jsonl(&read_file(&args.tasks, "task file")?)?;
    let provider = make_provider(&args.common)?;
    let noise = match &args.noise_corpus {
        Some(path) => Some(read_file(path, "noise corpus")?),
        None => None,
    };

    let (mut records, mut summary) = run_eval(
        &tasks,
        &config,
        provider.as_ref(),
        &templates,
        counter(),
        noise.as_deref(),
    )
    .await?;

    if let Some(variant) = &args.judge {
        let variant = match variant.as_str() {
            "score" => JudgeVariant::Score,
            "choice" => JudgeVariant::Choice,
            other => return Err(CliError::usage(format!("unknown judge variant `{other}`"))),
        };
        let judge_backend: Arc<dyn Backend> = match args.common.backend.as_str() {
            "http" => http_backend(&args.common)?,
            // The oracle judge compares answer strings only, so any
            // task's registry works.
            _ => Arc::new(OracleBackend::new(tasks[0].registry())),
        };
        run_judge_eval(
            &mut records,
            judge_backend.as_ref(),
            &JudgeTemplates::builtin(),
            variant,
            config.temperature,
        )
        .await?;
        summary = segplus::summarize(&records);
    }

    match &args.out {
        Some(path) => {
            let file = fs::File::create(path)?;
            write_records_jsonl(&records, file)?;
        }
        None => {
            write_records_jsonl(&records, std::io::stdout().lock())?;
        }
    }
    print!("{}", format_summary(&summary));
    if summary.failed > 0 {
        return Err(CliError::failure(format!(
            "{} of {} tasks failed",
            summary.failed, summary.items
        )));
    }
    Ok(())
}

fn cmd_haystack_gen(args: GenArgs) -> CliResult<()> {
    let kind: TaskKind = args.kind.parse().map_err(CliError::Usage)?;
    let lengths = args.lengths.unwrap_or_else(|| VALID_TARGETS.to_vec());
    if lengths.is_empty() {
        return Err(CliError::usage("--lengths must name at least one length"));
    }
    if args.items == 0 {
        return Err(CliError::usage("--items must be at least 1"));
    }
    fs::create_dir_all(&args.out)?;
    let counter = ApproxCounter;

    let mut tasks = Vec::with_capacity(lengths.len() * args.items);
    for &target in &lengths {
        tasks.extend(segplus::make_task_suite(
            kind, args.items, target, args.seed,
        ));
    }
    let manifest = args.out.join("tasks.jsonl");
    write_tasks_jsonl(&tasks, fs::File::create(&manifest)?)?;

    let mut docs_written = 0usize;
    if !args.tasks_only {
        for (index, task) in tasks.iter().enumerate() {
            let doc = task_document(task, None, &counter)?;
            let name = format!(
                "{kind}-{}-{:03}.txt",
                task.target_tokens,
                index % args.items
            );
            fs::write(args.out.join(name), doc)?;
            docs_written += 1;
        }
    }
    println!(
        "wrote {} tasks to {} ({} document files)",
        tasks.len(),
        manifest.display(),
        docs_written
    );
    Ok(())
}

async fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let config = build_config(&args.common)?;
    let templates = load_templates(&args.common)?;
    let tasks = read_tasks_jsonl(&read_file(&args.tasks, "task file")?)?;
    let provider = make_provider(&args.common)?;

    let spec = match args.dimension.as_str() {
        "segment-size" | "segment_size" => {
            let values = match &args.values {
                Some(vs) => vs
                    .iter()
                    .map(|v| {
                        v.parse::<usize>().map_err(|e| {
                            CliError::usage(format!("invalid segment size `{v}`: {e}"))
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?,
                None => vec![1000, 1500, 2000, 2500, 3000],
            };
            SweepSpec::SegmentSize(values)
        }
        "mode" => {
            let values = match &args.values {
                Some(vs) => vs
                    .iter()
                    .map(|v| v.parse::<Mode>().map_err(CliError::Usage))
                    .collect::<CliResult<Vec<_>>>()?,
                None => vec![Mode::Full, Mode::NoLabel, Mode::NoStructure, Mode::Normal],
            };
            SweepSpec::Mode(values)
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown sweep dimension `{other}`"
            )))
        }
    };

    let report = run_sweep(
        &spec,
        &tasks,
        &config,
        provider.as_ref(),
        &templates,
        counter(),
        None,
    )
    .await?;

    if let Some(path) = &args.out {
        let mut lines = String::new();
        for row in &report.rows {
            lines.push_str(&serde_json::to_string(row).expect("rows serialize infallibly"));
            lines.push('\n');
        }
        fs::write(path, lines)?;
    }
    if let Some(path) = &args.csv {
        fs::write(path, sweep_to_csv(&report))?;
    }
    print!("{}", format_sweep(&report));

    let failed: usize = report.rows.iter().map(|r| r.summary.failed).sum();
    if failed > 0 {
        return Err(CliError::failure(format!(
            "{failed} task runs failed across the sweep"
        )));
    }
    Ok(())
}

fn cmd_trace_view(args: TraceViewArgs) -> CliResult<()> {
    let events = read_trace_jsonl(&read_file(&args.trace, "trace")?)?;
    for event in &events {
        println!("{}", describe_event(event));
    }
    let stats = segplus::trace_stats(&events);
    println!(
        "-- {} events | calls {} (gather {}, filter {}, merge {}, answer {}) | tokens {} | iterations {} | truncated {}",
        events.len(),
        stats.backend_calls,
        stats.gather_calls,
        stats.filter_calls,
        stats.merge_calls,
        stats.answer_calls,
        stats.total_tokens,
        stats.iterations,
        stats.truncated
    );
    Ok(())
}

fn describe_event(event: &TraceEvent) -> String {
    match event {
        TraceEvent::SegmentsProduced {
            count,
            token_counts,
        } => {
            let largest = token_counts.iter().max().copied().unwrap_or(0);
            format!("segments      {count} produced, largest {largest} tokens")
        }
        TraceEvent::BackendCall {
            stage,
            position,
            iteration,
            prompt_tokens,
            completion_tokens,
            attempts,
            ..
        } => {
            let iter = iteration.map(|i| format!(" iter {i}")).unwrap_or_default();
            format!(
                "call          {stage}{iter} #{position}: {prompt_tokens} -> {completion_tokens} tokens, {attempts} attempt(s)"
            )
        }
        TraceEvent::NoteGathered {
            segment,
            evidence_tokens,
            degraded,
        } => {
            let tag = if *degraded { " (degraded)" } else { "" };
            format!("note          segment {segment}: {evidence_tokens} evidence tokens{tag}")
        }
        TraceEvent::LabelAssigned {
            note,
            label,
            source,
        } => {
            format!("label         note {note}: {label:?} via {source:?}")
        }
        TraceEvent::BatchesFormed { iteration, batches } => {
            format!("batches       iter {iteration}: {batches:?}")
        }
        TraceEvent::MergeProduced {
            iteration,
            batch,
            note_tokens,
            fallback,
        } => {
            let tag = if *fallback { " (concat fallback)" } else { "" };
            format!("merge         iter {iteration} batch {batch}: {note_tokens} tokens{tag}")
        }
        TraceEvent::IterationEnded {
            iteration,
            notes,
            total_tokens,
        } => {
            format!("iteration     {iteration} done: {notes} note(s), {total_tokens} tokens")
        }
        TraceEvent::NoteTruncated {
            from_tokens,
            to_tokens,
        } => {
            format!("truncated     {from_tokens} -> {to_tokens} tokens")
        }
        TraceEvent::AnswerProduced { answer } => {
            let first_line = answer.lines().next().unwrap_or("");
            format!("answer        {first_line}")
        }
    }
}
