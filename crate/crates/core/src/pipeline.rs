//! Generate, validate, retry, accept or drop.
//!
//! Each question gets an initial attempt plus up to `max_retries`
//! regenerations; the first completion passing the gate is kept, otherwise the
//! question is dropped with its full failure history. Every terminal decision
//! is appended to `checkpoint.jsonl` so an interrupted run can resume without
//! re-querying decided questions.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{QuestionRecord, QuestionSet};
use crate::gatekeeper::{constraints_satisfied, validate_raw, FailureReason, GateConfig, ParsedTrace};
use crate::jsonl::{self, JsonlError};
use crate::promptkit::{render_prompt_with, ConnectorPool, ConnectorSelection, GenerationMode};
use crate::provider::{Backend, GenParams, ProviderError};

pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const DROPS_FILE: &str = "drops.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("backend {backend} is not healthy: {detail}")]
    Unhealthy { backend: String, detail: String },
    #[error("question {question_id}: {source}")]
    Provider {
        question_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Checkpoint {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One accepted `(q, r, a)` element, or a record imported from elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(alias = "id")]
    pub question_id: String,
    pub question: String,
    pub thinking: String,
    pub answer: String,
    #[serde(default)]
    pub mode: Option<GenerationMode>,
    #[serde(default)]
    pub pool: Option<String>,
    #[serde(default)]
    pub backend: Option<String>,
    /// 1 for a first-try acceptance, up to `1 + max_retries`.
    #[serde(default)]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    /// Gate failures found on import. Never serialized.
    #[serde(skip)]
    pub flags: Vec<FailureReason>,
}

impl TraceRecord {
    /// A record without generation metadata, e.g. from an external corpus.
    pub fn external(
        question_id: impl Into<String>,
        question: impl Into<String>,
        thinking: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        TraceRecord {
            question_id: question_id.into(),
            question: question.into(),
            thinking: thinking.into(),
            answer: answer.into(),
            mode: None,
            pool: None,
            backend: None,
            attempt: None,
            created_at: None,
            flags: Vec::new(),
        }
    }

    pub fn parsed(&self) -> ParsedTrace {
        ParsedTrace::from_parts(self.thinking.clone(), self.answer.clone())
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<TraceRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.question_id.as_str())
    }

    pub fn flagged(&self) -> usize {
        self.records.iter().filter(|r| r.is_flagged()).count()
    }

    /// Appends records of `other` whose ids are not already present.
    pub fn supplement(&mut self, other: Dataset) -> usize {
        let mut seen: std::collections::HashSet<String> = self.ids().map(str::to_string).collect();
        let before = self.records.len();
        for r in other.records {
            if seen.insert(r.question_id.clone()) {
                self.records.push(r);
            }
        }
        self.records.len() - before
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptFailure {
    pub attempt: u32,
    pub failures: Vec<FailureReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// A question excluded after every attempt failed the gate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    pub question_id: String,
    pub attempts: u32,
    pub last_failures: Vec<FailureReason>,
    pub history: Vec<AttemptFailure>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub mode: GenerationMode,
    pub pool: ConnectorPool,
    pub selection: ConnectorSelection,
    pub gen: GenParams,
    pub gate: GateConfig,
    pub max_retries: u32,
    pub parallelism: usize,
    /// Where checkpoint, dataset, drop log and manifest go. `None` keeps
    /// everything in memory.
    pub out_dir: Option<PathBuf>,
    pub resume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: GenerationMode::Full,
            pool: ConnectorPool::base(),
            selection: ConnectorSelection::All,
            gen: GenParams::default(),
            gate: GateConfig::default(),
            max_retries: 5,
            parallelism: 1,
            out_dir: None,
            resume: false,
        }
    }
}

impl PipelineConfig {
    fn validate(&self) -> Result<(), PipelineError> {
        if self.parallelism == 0 {
            return Err(PipelineError::InvalidConfig("parallelism must be >= 1".into()));
        }
        if self.resume && self.out_dir.is_none() {
            return Err(PipelineError::InvalidConfig(
                "resume requires an output directory".into(),
            ));
        }
        self.gen
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    /// Settings that influence the output. Scheduling knobs are left out so
    /// that manifests do not depend on them.
    pub fn manifest_config(&self) -> serde_json::Value {
        let selection = match self.selection {
            ConnectorSelection::All => json!("all"),
            ConnectorSelection::Sample { per_list, seed } => json!({"per_list": per_list, "seed": seed}),
        };
        json!({
            "mode": self.mode,
            "pool": self.pool.name,
            "selection": selection,
            "gen": self.gen,
            "gate": {
                "min_chars": self.gate.min_chars,
                "max_chars": self.gate.max_chars,
                "final_answer_in_thinking_is_leak": self.gate.final_answer_in_thinking_is_leak,
                "retain_refusals": self.gate.retain_refusals,
            },
            "max_retries": self.max_retries,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
enum Decision {
    Accepted { index: usize, record: TraceRecord },
    Dropped { index: usize, drop: DropEntry },
}

impl Decision {
    fn index(&self) -> usize {
        match self {
            Decision::Accepted { index, .. } | Decision::Dropped { index, .. } => *index,
        }
    }

    fn question_id(&self) -> &str {
        match self {
            Decision::Accepted { record, .. } => &record.question_id,
            Decision::Dropped { drop, .. } => &drop.question_id,
        }
    }
}

fn decide(
    index: usize,
    q: &QuestionRecord,
    cfg: &PipelineConfig,
    backend: &dyn Backend,
) -> Result<Decision, ProviderError> {
    let prompt = render_prompt_with(q, cfg.mode, &cfg.pool, cfg.selection);
    let mut history = Vec::new();
    for attempt in 1..=cfg.max_retries + 1 {
        let params = GenParams {
            seed: cfg.gen.seed.map(|s| s.wrapping_add(u64::from(attempt - 1))),
            ..cfg.gen.clone()
        };
        let completion = backend.complete(&prompt, &params)?;
        let (parsed, report) = validate_raw(&completion.text, &cfg.gate);
        match parsed {
            Some(t) if report.passed => {
                let record = TraceRecord {
                    question_id: q.id.clone(),
                    question: q.text.clone(),
                    thinking: t.thinking,
                    answer: t.answer,
                    mode: Some(cfg.mode),
                    pool: Some(cfg.pool.name.clone()),
                    backend: Some(backend.name().to_string()),
                    attempt: Some(attempt),
                    created_at: Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
                    flags: Vec::new(),
                };
                return Ok(Decision::Accepted { index, record });
            }
            _ => {
                log::debug!("{}: attempt {attempt} rejected: {:?}", q.id, report.failures);
                history.push(AttemptFailure {
                    attempt,
                    failures: report.failures,
                    detail: report.detail,
                });
            }
        }
    }
    let last_failures = history.last().map(|h| h.failures.clone()).unwrap_or_default();
    Ok(Decision::Dropped {
        index,
        drop: DropEntry {
            question_id: q.id.clone(),
            attempts: cfg.max_retries + 1,
            last_failures,
            history,
        },
    })
}

/// Reads decided questions back. A torn final line, left by an interrupted
/// write, is ignored; damage anywhere else is an error.
fn read_checkpoint(path: &Path) -> Result<Vec<Decision>, PipelineError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Decision>(line) {
            Ok(d) => out.push(d),
            Err(_) if Some(i) == last => {
                log::warn!("{}:{}: ignoring incomplete checkpoint line", path.display(), i + 1);
            }
            Err(e) => {
                return Err(PipelineError::Checkpoint {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn to_lines<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, &row).expect("in-memory serialization");
        buf.push(b'\n');
    }
    buf
}

/// Runs the whole loop over `qs`. Output order follows input order whatever
/// the parallelism.
///
/// With an output directory, writes `checkpoint.jsonl` as decisions land and
/// `dataset.jsonl`, its manifest and `drops.jsonl` at the end. A hard
/// provider error stops the run; decisions taken so far stay checkpointed.
pub fn run_generation(
    qs: &QuestionSet,
    cfg: &PipelineConfig,
    backend: &dyn Backend,
) -> Result<(Dataset, Vec<DropEntry>), PipelineError> {
    cfg.validate()?;
    let health = backend.probe(&cfg.gen).map_err(|source| PipelineError::Unhealthy {
        backend: backend.name().to_string(),
        detail: source.to_string(),
    })?;
    if !health.healthy {
        return Err(PipelineError::Unhealthy {
            backend: health.backend,
            detail: health.detail,
        });
    }

    let mut decided: Vec<Option<Decision>> = vec![None; qs.len()];
    let mut checkpoint = None;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(CHECKPOINT_FILE);
        if cfg.resume {
            let index_of: HashMap<&str, usize> = qs.ids().enumerate().map(|(i, id)| (id, i)).collect();
            let mut kept = Vec::new();
            for d in read_checkpoint(&path)? {
                match index_of.get(d.question_id()) {
                    Some(&i) if decided[i].is_none() => {
                        let d = match d {
                            Decision::Accepted { record, .. } => Decision::Accepted { index: i, record },
                            Decision::Dropped { drop, .. } => Decision::Dropped { index: i, drop },
                        };
                        kept.push(d.clone());
                        decided[i] = Some(d);
                    }
                    Some(_) => {}
                    None => log::warn!("checkpoint entry for unknown question {}", d.question_id()),
                }
            }
            // rewrite without any torn tail before appending
            write_atomic(&path, &to_lines(&kept))?;
            log::info!("resuming with {} of {} questions decided", kept.len(), qs.len());
        } else {
            File::create(&path).map_err(io_err(&path))?;
        }
        let file = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        checkpoint = Some((path, file));
    }

    let pending: Vec<usize> = (0..qs.len()).filter(|&i| decided[i].is_none()).collect();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let mut first_error: Option<(usize, PipelineError)> = None;
    let workers = cfg.parallelism.min(pending.len()).max(1);

    std::thread::scope(|s| -> Result<(), PipelineError> {
        let (tx, rx) = mpsc::channel::<(usize, Result<Decision, ProviderError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next, abort) = (&pending, &next, &abort);
            s.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(k) else { break };
                let out = decide(i, &qs.records[i], cfg, backend);
                if out.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
                if tx.send((i, out)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, out) in rx {
            match out {
                Ok(d) => {
                    if let Some((path, file)) = checkpoint.as_mut() {
                        let mut line = serde_json::to_vec(&d).expect("in-memory serialization");
                        line.push(b'\n');
                        if let Err(e) = file.write_all(&line) {
                            abort.store(true, Ordering::SeqCst);
                            return Err(io_err(path)(e));
                        }
                    }
                    decided[i] = Some(d);
                }
                Err(source) => {
                    if first_error.as_ref().is_none_or(|(j, _)| i < *j) {
                        let question_id = qs.records[i].id.clone();
                        first_error = Some((i, PipelineError::Provider { question_id, source }));
                    }
                }
            }
        }
        Ok(())
    })?;
    if let Some((_, e)) = first_error {
        return Err(e);
    }

    let mut dataset = Dataset::default();
    let mut drops = Vec::new();
    for d in decided.into_iter().flatten() {
        debug_assert!(d.index() < qs.len());
        match d {
            Decision::Accepted { record, .. } => dataset.records.push(record),
            Decision::Dropped { drop, .. } => drops.push(drop),
        }
    }

    if let Some(dir) = &cfg.out_dir {
        let ctx = ManifestContext {
            config: cfg.manifest_config(),
            pool: Some(PoolRef {
                name: cfg.pool.name.clone(),
                checksum: cfg.pool.checksum(),
            }),
            dropped: Some(drops.len()),
        };
        export_dataset(&dataset, &dir.join(DATASET_FILE), &ctx)?;
        write_atomic(&dir.join(DROPS_FILE), &to_lines(&drops))?;
    }
    Ok((dataset, drops))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolRef {
    pub name: String,
    pub checksum: String,
}

/// What the caller knows about how a dataset was made.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ManifestContext {
    pub config: serde_json::Value,
    pub pool: Option<PoolRef>,
    pub dropped: Option<usize>,
}

/// Companion file written next to every export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolRef>,
    pub config: serde_json::Value,
    pub formats: BTreeMap<String, String>,
}

fn format_docs() -> BTreeMap<String, String> {
    [
        (
            DATASET_FILE,
            "one JSON object per line: question_id, question, thinking, answer, mode, pool, backend, attempt",
        ),
        (
            DROPS_FILE,
            "one JSON object per line: question_id, attempts, last_failures, history[{attempt, failures, detail?}]",
        ),
        (
            CHECKPOINT_FILE,
            "append-only, one decision per line: {decision: accepted, index, record} or {decision: dropped, index, drop}",
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// `dir/name.jsonl` → `dir/name.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    path.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Serialize)]
struct ExportRow<'a> {
    question_id: &'a str,
    question: &'a str,
    thinking: &'a str,
    answer: &'a str,
    mode: Option<GenerationMode>,
    pool: Option<&'a str>,
    backend: Option<&'a str>,
    attempt: Option<u32>,
}

/// Writes the line-delimited dataset and its manifest. Timestamps are not
/// exported, so identical runs give identical bytes.
pub fn export_dataset(d: &Dataset, path: &Path, ctx: &ManifestContext) -> Result<Manifest, PipelineError> {
    let rows = d.records.iter().map(|r| ExportRow {
        question_id: &r.question_id,
        question: &r.question,
        thinking: &r.thinking,
        answer: &r.answer,
        mode: r.mode,
        pool: r.pool.as_deref(),
        backend: r.backend.as_deref(),
        attempt: r.attempt,
    });
    write_atomic(path, &to_lines(rows))?;
    let manifest = Manifest {
        tool: format!("forge {}", env!("CARGO_PKG_VERSION")),
        records: d.len(),
        dropped: ctx.dropped,
        pool: ctx.pool.clone(),
        config: ctx.config.clone(),
        formats: format_docs(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("in-memory serialization");
    bytes.push(b'\n');
    write_atomic(&manifest_path(path), &bytes)?;
    Ok(manifest)
}

/// Loads a line-delimited dataset. Records failing the default gate are
/// kept with their failures in [`TraceRecord::flags`].
pub fn import_dataset(path: &Path) -> Result<Dataset, PipelineError> {
    import_dataset_with(path, &GateConfig::default())
}

pub fn import_dataset_with(path: &Path, gate: &GateConfig) -> Result<Dataset, PipelineError> {
    let rows: Vec<(usize, TraceRecord)> = jsonl::read(path)?;
    let records = rows
        .into_iter()
        .map(|(_, mut r)| {
            let report = if *gate == GateConfig::default() {
                constraints_satisfied(&r.parsed())
            } else {
                crate::gatekeeper::constraints_satisfied_with(&r.parsed(), gate)
            };
            r.flags = report.failures;
            r
        })
        .collect();
    Ok(Dataset { records })
}
