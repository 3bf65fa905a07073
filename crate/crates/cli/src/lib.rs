//! The `forge` command line.
//!
//! Each subcommand loads its inputs, calls one forge-core operation and writes
//! the result. Exit status: 0 on success, 1 when an operation fails, 2 when the
//! invocation itself is wrong.
//!
//! Settings resolve as flag, then `--config` file, then built-in default.

mod config;

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use forge_core::analytics::{
    corpus_stats, extract_segments, redundancy_histogram, render_stats_report, scatter_export, write_histogram_csv,
    write_scatter_csv, write_segments_csv, write_stats_csv, BinSpec, ConnectorMatcher, TokenizerSpec,
};
use forge_core::corpus::{
    dedup_exact, dedup_near_with, load_questions, merge, write_drop_log, NearDedupConfig, Source,
};
use forge_core::evalkit::{
    aggregate, load_responses, score_item, write_metrics_csv, DefaultMatcher, FormatMode, ItemScore,
};
use forge_core::gatekeeper::{lint_with, validate_raw, GateConfig, LintReport, ValidationReport};
use forge_core::pipeline::{
    export_dataset, import_dataset_with, run_generation, Dataset, ManifestContext, PipelineConfig, PoolRef,
};
use forge_core::promptkit::{ConnectorPool, ConnectorSelection, GenerationMode};
use forge_core::provider::{Backend, GenParams, HttpBackend, HttpConfig, MockBackend, DEFAULT_API_KEY_ENV};
use serde::Serialize;

pub use config::{pick, FileConfig};

#[derive(Debug, Parser)]
#[command(
    name = "forge",
    about = "Build, check, measure and score compact chain-of-thought corpora",
    disable_version_flag = true
)]
struct Cli {
    /// TOML file with default settings; flags override it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Print the tool version and built-in pool checksums
    #[arg(short = 'V', long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge question files and drop exact and near duplicates
    Dedup(DedupArgs),
    /// Generate traces, validate them, retry or drop
    Generate(Box<GenerateArgs>),
    /// Check raw completions against the acceptance gate
    Validate(ValidateArgs),
    /// Length and connector density per dataset
    Stats(StatsArgs),
    /// Histogram of connector redundancy
    Redundancy(RedundancyArgs),
    /// Connector count against length, one row per trace
    Scatter(ScatterArgs),
    /// Text windows around every connector
    Segments(SegmentsArgs),
    /// Score a response dump
    Eval(EvalArgs),
    /// Re-export a dataset, optionally merged and filtered
    Export(ExportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Dedup(_) => "dedup",
            Command::Generate(_) => "generate",
            Command::Validate(_) => "validate",
            Command::Stats(_) => "stats",
            Command::Redundancy(_) => "redundancy",
            Command::Scatter(_) => "scatter",
            Command::Segments(_) => "segments",
            Command::Eval(_) => "eval",
            Command::Export(_) => "export",
        }
    }
}

#[derive(Debug, Args)]
struct GateArgs {
    /// Minimum thinking length in characters [default: 100]
    #[arg(long)]
    min_chars: Option<usize>,
    /// Maximum thinking length in characters [default: 30000]
    #[arg(long)]
    max_chars: Option<usize>,
    /// Accept traces that carry the refusal sentinel
    #[arg(long)]
    retain_refusals: bool,
    /// Treat "Final Answer:" inside the thinking as leakage
    #[arg(long)]
    strict_leak: bool,
}

#[derive(Debug, Args)]
struct DedupArgs {
    /// Question file, optionally prefixed with its source (s1, limo, custom)
    #[arg(long = "in", value_name = "[SOURCE=]PATH", required = true)]
    inputs: Vec<String>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Where to log dropped ids and the survivor each duplicated
    #[arg(long, value_name = "PATH")]
    drops: Option<PathBuf>,
    /// Near-duplicate similarity threshold [default: 0.9]
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    case_sensitive: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_name = "[SOURCE=]PATH")]
    questions: String,
    /// full, connector-only or compact-only [default: full]
    #[arg(long)]
    mode: Option<GenerationMode>,
    /// base, augmented or a pool file [default: base]
    #[arg(long)]
    pool: Option<String>,
    /// Backend name, or `mock` to replay fixtures
    #[arg(long)]
    backend: Option<String>,
    /// Fixture directory for the mock backend
    #[arg(long, value_name = "DIR")]
    fixtures: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Continue from the checkpoint in the output directory
    #[arg(long)]
    resume: bool,
    /// Concurrent questions [default: 1]
    #[arg(long)]
    parallelism: Option<usize>,
    /// Regenerations after a rejected trace [default: 5]
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    base_url: Option<String>,
    /// Environment variable holding the API key [default: FORGE_API_KEY]
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    rps: Option<f64>,
    #[command(flatten)]
    gate: GateArgs,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Directory of .txt completions, or a JSON-lines file of {id, completion}
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Also report connector placement findings
    #[arg(long)]
    lint: bool,
    #[arg(long)]
    pool: Option<String>,
    /// Mode the completions were generated in
    #[arg(long)]
    mode: Option<GenerationMode>,
    #[command(flatten)]
    gate: GateArgs,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Dataset file or directory of them, optionally labelled
    #[arg(long = "in", value_name = "[LABEL=]PATH", required = true)]
    inputs: Vec<String>,
    /// whitespace or chars [default: whitespace]
    #[arg(long)]
    tokenizer: Option<TokenizerSpec>,
    #[arg(long)]
    pool: Option<String>,
    /// Write CSV instead of the table
    #[arg(long)]
    csv: bool,
    /// Add the per-trace averaged Conn/1K column
    #[arg(long = "macro")]
    with_macro: bool,
}

#[derive(Debug, Args)]
struct RedundancyArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    pool: Option<String>,
    /// [default: 1]
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    bin_start: Option<f64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScatterArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    pool: Option<String>,
    #[arg(long)]
    tokenizer: Option<TokenizerSpec>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SegmentsArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    pool: Option<String>,
    /// Characters kept on each side [default: 80]
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    responses: PathBuf,
    /// strict or loose answer extraction [default: loose]
    #[arg(long)]
    mode: Option<FormatMode>,
    /// Responses per question [default: 5]
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tokenizer: Option<TokenizerSpec>,
    /// Metrics CSV destination [default: standard output]
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-question scores as JSON lines
    #[arg(long, value_name = "PATH")]
    scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Datasets whose new question ids are appended
    #[arg(long, value_name = "PATH")]
    supplement: Vec<PathBuf>,
    /// Leave out records that fail the gate
    #[arg(long)]
    only_valid: bool,
    /// Pool to record in the manifest
    #[arg(long)]
    pool: Option<String>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    gate: GateArgs,
}

enum Failure {
    Usage(String),
    Domain(String),
}

fn domain<E: Display>(e: E) -> Failure {
    Failure::Domain(e.to_string())
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type Outcome = Result<(), Failure>;

struct Ctx<'a> {
    file: FileConfig,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

/// Runs one invocation and returns its exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.kind() == ErrorKind::DisplayHelp {
                let _ = write!(out, "{text}");
                return 0;
            }
            let _ = write!(err, "{text}");
            if !text.contains("Usage:") {
                let name = args
                    .iter()
                    .skip(1)
                    .find_map(|a| a.to_str().filter(|s| !s.starts_with('-')));
                let _ = writeln!(err, "\n{}", synopsis(name));
            }
            return 2;
        }
    };
    if cli.version {
        let _ = write!(out, "{}", version_text());
        return 0;
    }
    let Some(command) = cli.command else {
        let _ = write!(err, "{}", Cli::command().render_help());
        return 2;
    };
    let file = match &cli.config {
        Some(path) => match FileConfig::load(path) {
            Ok(f) => f,
            Err(e) => {
                let _ = writeln!(err, "error: config {e}");
                return 2;
            }
        },
        None => FileConfig::default(),
    };
    let name = command.name();
    let mut ctx = Ctx { file, out, err };
    let result = match command {
        Command::Dedup(a) => dedup(a, &mut ctx),
        Command::Generate(a) => generate(*a, &mut ctx),
        Command::Validate(a) => validate(a, &mut ctx),
        Command::Stats(a) => stats(a, &mut ctx),
        Command::Redundancy(a) => redundancy(a, &mut ctx),
        Command::Scatter(a) => scatter(a, &mut ctx),
        Command::Segments(a) => segments(a, &mut ctx),
        Command::Eval(a) => eval(a, &mut ctx),
        Command::Export(a) => export(a, &mut ctx),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Domain(msg)) => {
            let _ = writeln!(ctx.err, "error: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(ctx.err, "error: {msg}\n\n{}", synopsis(Some(name)));
            2
        }
    }
}

/// Usage line of subcommand `name`, or of the tool when there is no such subcommand.
fn synopsis(name: Option<&str>) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    match name.and_then(|n| cmd.find_subcommand_mut(n)) {
        Some(sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

/// `forge <version>` followed by the name and checksum of each built-in pool.
pub fn version_text() -> String {
    let mut s = format!("forge {}\n", env!("CARGO_PKG_VERSION"));
    for pool in [ConnectorPool::base(), ConnectorPool::augmented()] {
        s.push_str(&format!("pool {} {}\n", pool.name, pool.checksum()));
    }
    s
}

/// Parses a value that came from the config file.
fn from_file<T: FromStr>(key: &str, value: Option<&str>) -> Result<Option<T>, Failure>
where
    T::Err: Display,
{
    value
        .map(|v| v.parse().map_err(|e| usage(format!("config {key}: {e}"))))
        .transpose()
}

fn resolve_pool(flag: Option<&str>, file: Option<&str>) -> Result<ConnectorPool, Failure> {
    ConnectorPool::resolve(flag.or(file).unwrap_or("base")).map_err(domain)
}

fn tokenizer(flag: Option<TokenizerSpec>, ctx: &Ctx) -> Result<TokenizerSpec, Failure> {
    let file = from_file("tokenizer", ctx.file.tokenizer.as_deref())?;
    Ok(pick(flag, file, TokenizerSpec::default()))
}

fn gate(a: &GateArgs, ctx: &Ctx) -> Result<GateConfig, Failure> {
    let f = &ctx.file.gate;
    let d = GateConfig::default();
    let g = GateConfig {
        min_chars: pick(a.min_chars, f.min_chars, d.min_chars),
        max_chars: pick(a.max_chars, f.max_chars, d.max_chars),
        retain_refusals: pick(a.retain_refusals.then_some(true), f.retain_refusals, d.retain_refusals),
        final_answer_in_thinking_is_leak: pick(
            a.strict_leak.then_some(true),
            f.final_answer_in_thinking_is_leak,
            d.final_answer_in_thinking_is_leak,
        ),
    };
    if g.min_chars > g.max_chars {
        return Err(usage(format!(
            "min-chars {} exceeds max-chars {}",
            g.min_chars, g.max_chars
        )));
    }
    Ok(g)
}

/// Splits `PREFIX=PATH` when the prefix parses as `T`.
fn split_prefixed<T: FromStr>(arg: &str) -> (Option<T>, &str) {
    match arg.split_once('=') {
        Some((prefix, rest)) => match prefix.parse() {
            Ok(v) => (Some(v), rest),
            Err(_) => (None, arg),
        },
        None => (None, arg),
    }
}

/// Writes `bytes` to `path`, or to the output stream without one.
fn emit(bytes: &[u8], path: Option<&Path>, ctx: &mut Ctx) -> Outcome {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| domain(format!("{}: {e}", p.display()))),
        None => ctx.out.write_all(bytes).map_err(domain),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    import_dataset_with(path, &GateConfig::default()).map_err(domain)
}

fn dedup(a: DedupArgs, ctx: &mut Ctx) -> Outcome {
    let f = &ctx.file.dedup;
    let cfg = NearDedupConfig {
        threshold: pick(a.threshold, f.threshold, 0.9),
        case_insensitive: !pick(a.case_sensitive.then_some(true), f.case_sensitive, false),
    };
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(usage(format!("threshold must lie in [0, 1], got {}", cfg.threshold)));
    }
    let mut sets = Vec::new();
    for arg in &a.inputs {
        let (source, path) = split_prefixed::<Source>(arg);
        sets.push(load_questions(Path::new(path), source.unwrap_or(Source::Custom)).map_err(domain)?);
    }
    let merged = merge(&sets).map_err(domain)?;
    let exact = dedup_exact(&merged);
    let near = dedup_near_with(&exact.set, &cfg).map_err(domain)?;
    near.set.write_jsonl(&a.out).map_err(domain)?;
    if let Some(p) = &a.drops {
        let all: Vec<_> = exact.drops.iter().chain(&near.drops).cloned().collect();
        write_drop_log(p, &all).map_err(domain)?;
    }
    let _ = writeln!(
        ctx.err,
        "dedup: {} in, {} kept, {} exact, {} near (threshold {})",
        merged.len(),
        near.set.len(),
        exact.drops.len(),
        near.drops.len(),
        cfg.threshold
    );
    Ok(())
}

fn generate(a: GenerateArgs, ctx: &mut Ctx) -> Outcome {
    let f = ctx.file.generate.clone();
    let mode = pick(
        a.mode,
        from_file("generate.mode", f.mode.as_deref())?,
        GenerationMode::Full,
    );
    let pool = resolve_pool(a.pool.as_deref(), ctx.file.pool.as_deref())?;
    let d = GenParams::default();
    let timeout = pick(a.timeout_secs, f.timeout_secs, d.timeout.as_secs_f64());
    if !(timeout.is_finite() && timeout > 0.0) {
        return Err(usage(format!("timeout must be positive, got {timeout}")));
    }
    let gen = GenParams {
        model: pick(a.model, f.model, d.model),
        temperature: pick(a.temperature, f.temperature, d.temperature),
        max_output_tokens: pick(a.max_tokens, f.max_tokens, d.max_output_tokens),
        seed: a.seed.or(f.seed),
        timeout: Duration::from_secs_f64(timeout),
    };
    let cfg = PipelineConfig {
        mode,
        pool,
        selection: ConnectorSelection::All,
        gen,
        gate: gate(&a.gate, ctx)?,
        max_retries: pick(a.max_retries, f.max_retries, 5),
        parallelism: pick(a.parallelism, f.parallelism, 1),
        out_dir: Some(a.out.clone()),
        resume: a.resume,
    };
    if cfg.parallelism == 0 {
        return Err(usage("parallelism must be at least 1"));
    }

    let backend_name = a
        .backend
        .or(f.backend)
        .ok_or_else(|| usage("no backend given (--backend or [generate] backend)"))?;
    let backend: Box<dyn Backend> = if backend_name == "mock" {
        let dir = a
            .fixtures
            .or(f.fixtures)
            .ok_or_else(|| usage("the mock backend needs --fixtures"))?;
        Box::new(MockBackend::from_dir(&dir).map_err(|e| domain(format!("{}: {e}", dir.display())))?)
    } else {
        let hd = HttpConfig::default();
        let http = HttpConfig {
            name: backend_name,
            base_url: pick(a.base_url, f.base_url, hd.base_url),
            api_key_env: pick(a.api_key_env, f.api_key_env, DEFAULT_API_KEY_ENV.to_string()),
            max_in_flight: pick(a.max_in_flight, f.max_in_flight, hd.max_in_flight).max(1),
            requests_per_second: a.rps.or(f.requests_per_second),
            ..hd
        };
        Box::new(HttpBackend::from_env(http).map_err(domain)?)
    };

    let (source, path) = split_prefixed::<Source>(&a.questions);
    let qs = load_questions(Path::new(path), source.unwrap_or(Source::Custom)).map_err(domain)?;
    let (dataset, drops) = run_generation(&qs, &cfg, backend.as_ref()).map_err(domain)?;
    let _ = writeln!(
        ctx.err,
        "generate: {} questions, {} accepted, {} dropped, output in {}",
        qs.len(),
        dataset.len(),
        drops.len(),
        a.out.display()
    );
    Ok(())
}

/// `(id, raw completion)` pairs from a directory of `.txt` files or a JSON-lines file.
fn load_completions(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    let io = |e: std::io::Error| domain(format!("{}: {e}", path.display()));
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        return files
            .into_iter()
            .map(|p| {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                std::fs::read_to_string(&p)
                    .map(|t| (id, t))
                    .map_err(|e| domain(format!("{}: {e}", p.display())))
            })
            .collect();
    }
    let text = std::fs::read_to_string(path).map_err(io)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| domain(format!("{}:{}: {m}", path.display(), i + 1));
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let id = match v.get("id").or_else(|| v.get("question_id")) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing id")),
        };
        let raw = ["completion", "text", "raw"]
            .iter()
            .find_map(|k| v.get(*k).and_then(|x| x.as_str()))
            .ok_or_else(|| bad("missing completion"))?;
        rows.push((id, raw.to_string()));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct ValidateRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    report: ValidationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    lint: Option<LintReport>,
}

fn validate(a: ValidateArgs, ctx: &mut Ctx) -> Outcome {
    if a.lint && a.mode == Some(GenerationMode::CompactOnly) {
        return Err(usage("connector lints do not apply to compact-only traces"));
    }
    let gate = gate(&a.gate, ctx)?;
    let matcher = if a.lint {
        Some(ConnectorMatcher::new(&resolve_pool(
            a.pool.as_deref(),
            ctx.file.pool.as_deref(),
        )?))
    } else {
        None
    };
    let rows = load_completions(&a.input)?;
    let mut passed = 0;
    let mut buf = Vec::new();
    for (id, raw) in &rows {
        let (parsed, report) = validate_raw(raw, &gate);
        passed += usize::from(report.passed);
        let lint = match (&matcher, &parsed) {
            (Some(m), Some(t)) => Some(lint_with(&t.thinking, m)),
            _ => None,
        };
        let row = ValidateRow { id, report, lint };
        serde_json::to_writer(&mut buf, &row).map_err(domain)?;
        buf.push(b'\n');
    }
    emit(&buf, None, ctx)?;
    let _ = writeln!(
        ctx.err,
        "validate: {} records, {} passed, {} failed",
        rows.len(),
        passed,
        rows.len() - passed
    );
    Ok(())
}

/// Expands `[LABEL=]PATH` into labelled dataset files; a directory yields its
/// `.jsonl` files in name order, labelled by file stem.
fn labelled_inputs(args: &[String]) -> Result<Vec<(String, PathBuf)>, Failure> {
    let stem = |p: &Path| p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let mut out = Vec::new();
    for arg in args {
        let (label, path) = match arg.split_once('=') {
            Some((l, p)) if !l.is_empty() && !Path::new(arg).exists() => (Some(l.to_string()), PathBuf::from(p)),
            _ => (None, PathBuf::from(arg)),
        };
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&path)
                .map_err(|e| domain(format!("{}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "jsonl"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(domain(format!("{}: no .jsonl files", path.display())));
            }
            out.extend(files.into_iter().map(|p| (stem(&p), p)));
        } else {
            out.push((label.unwrap_or_else(|| stem(&path)), path));
        }
    }
    Ok(out)
}

fn stats(a: StatsArgs, ctx: &mut Ctx) -> Outcome {
    let tok = tokenizer(a.tokenizer, ctx)?;
    let matcher = ConnectorMatcher::new(&resolve_pool(a.pool.as_deref(), ctx.file.pool.as_deref())?);
    let mut rows = Vec::new();
    for (label, path) in labelled_inputs(&a.inputs)? {
        let d = load_dataset(&path)?;
        let s = corpus_stats(&d.records, &tok, &matcher).map_err(|e| domain(format!("{}: {e}", path.display())))?;
        rows.push((label, s));
    }
    if a.csv {
        let mut buf = Vec::new();
        write_stats_csv(&rows, &mut buf).map_err(domain)?;
        emit(&buf, None, ctx)
    } else {
        emit(render_stats_report(&rows, a.with_macro).as_bytes(), None, ctx)
    }
}

fn redundancy(a: RedundancyArgs, ctx: &mut Ctx) -> Outcome {
    let f = &ctx.file.analytics;
    let bins = BinSpec {
        width: pick(a.bin_width, f.bin_width, 1.0),
        start: a.bin_start.or(f.bin_start),
    };
    let matcher = ConnectorMatcher::new(&resolve_pool(a.pool.as_deref(), ctx.file.pool.as_deref())?);
    let d = load_dataset(&a.input)?;
    let h = redundancy_histogram(&d.records, &matcher, bins).map_err(domain)?;
    let mut buf = Vec::new();
    write_histogram_csv(&h, &mut buf).map_err(domain)?;
    emit(&buf, a.out.as_deref(), ctx)?;
    for w in &h.warnings {
        let _ = writeln!(ctx.err, "warning: {w}");
    }
    let _ = writeln!(
        ctx.err,
        "redundancy: {} traces without connectors left out",
        h.undefined
    );
    Ok(())
}

fn scatter(a: ScatterArgs, ctx: &mut Ctx) -> Outcome {
    let tok = tokenizer(a.tokenizer, ctx)?;
    let matcher = ConnectorMatcher::new(&resolve_pool(a.pool.as_deref(), ctx.file.pool.as_deref())?);
    let d = load_dataset(&a.input)?;
    let rows = scatter_export(&d.records, &tok, &matcher);
    let mut buf = Vec::new();
    write_scatter_csv(&rows, &mut buf).map_err(domain)?;
    emit(&buf, a.out.as_deref(), ctx)
}

fn segments(a: SegmentsArgs, ctx: &mut Ctx) -> Outcome {
    let window = pick(a.window, ctx.file.analytics.window, 80);
    if window == 0 {
        return Err(usage("window must be positive"));
    }
    let matcher = ConnectorMatcher::new(&resolve_pool(a.pool.as_deref(), ctx.file.pool.as_deref())?);
    let d = load_dataset(&a.input)?;
    let mut all = Vec::new();
    for t in &d.records {
        all.extend(extract_segments(t, &matcher, window).map_err(domain)?);
    }
    let mut buf = Vec::new();
    write_segments_csv(&all, &mut buf).map_err(domain)?;
    emit(&buf, a.out.as_deref(), ctx)
}

fn eval(a: EvalArgs, ctx: &mut Ctx) -> Outcome {
    let mode = pick(
        a.mode,
        from_file("eval.mode", ctx.file.eval.mode.as_deref())?,
        FormatMode::Loose,
    );
    let k = pick(a.k, ctx.file.eval.k, 5);
    if k == 0 {
        return Err(usage("k must be at least 1"));
    }
    let tok = tokenizer(a.tokenizer, ctx)?;
    let items = load_responses(&a.responses, Some(k)).map_err(|e| domain(format!("{}: {e}", a.responses.display())))?;
    let scores: Vec<ItemScore> = items
        .iter()
        .map(|i| score_item(i, mode, &DefaultMatcher, &tok))
        .collect();
    let table = aggregate(&scores).map_err(domain)?;
    if let Some(p) = &a.scores {
        let mut buf = Vec::new();
        for s in &scores {
            serde_json::to_writer(&mut buf, s).map_err(domain)?;
            buf.push(b'\n');
        }
        emit(&buf, Some(p), ctx)?;
    }
    let mut buf = Vec::new();
    write_metrics_csv(&table, &mut buf).map_err(domain)?;
    emit(&buf, a.out.as_deref(), ctx)?;
    let _ = writeln!(
        ctx.err,
        "eval: {} items, k={k}, mode={mode}, tokenizer={tok}, {} without defined ART",
        scores.len(),
        table.art_undefined
    );
    Ok(())
}

fn export(a: ExportArgs, ctx: &mut Ctx) -> Outcome {
    let gate = gate(&a.gate, ctx)?;
    let mut d = import_dataset_with(&a.input, &gate).map_err(domain)?;
    let mut added = 0;
    for p in &a.supplement {
        added += d.supplement(import_dataset_with(p, &gate).map_err(domain)?);
    }
    let flagged = d.flagged();
    if a.only_valid {
        d.records.retain(|r| !r.is_flagged());
    }
    let pool = match a.pool.as_deref().or(ctx.file.pool.as_deref()) {
        Some(spec) => {
            let p = ConnectorPool::resolve(spec).map_err(domain)?;
            Some(PoolRef {
                checksum: p.checksum(),
                name: p.name,
            })
        }
        None => None,
    };
    let manifest_ctx = ManifestContext {
        config: serde_json::json!({
            "only_valid": a.only_valid,
            "gate": {
                "min_chars": gate.min_chars,
                "max_chars": gate.max_chars,
                "final_answer_in_thinking_is_leak": gate.final_answer_in_thinking_is_leak,
                "retain_refusals": gate.retain_refusals,
            },
        }),
        pool,
        dropped: a.only_valid.then_some(flagged),
    };
    let m = export_dataset(&d, &a.out, &manifest_ctx).map_err(domain)?;
    let _ = writeln!(
        ctx.err,
        "export: {} records ({} supplemented, {} flagged{}) to {}",
        m.records,
        added,
        flagged,
        if a.only_valid { " and left out" } else { "" },
        a.out.display()
    );
    Ok(())
}
