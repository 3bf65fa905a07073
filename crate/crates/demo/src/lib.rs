//! forge-core compiled to WebAssembly for `www/index.html`.
//!
//! Every export takes and returns plain strings; structured results are JSON.

use forge_core::analytics::{text_stats, ConnectorMatcher, TokenizerSpec, TraceStats};
use forge_core::gatekeeper::{lint_with, validate_raw, GateConfig, LintReport, ValidationReport};
use forge_core::promptkit::{render_prompt_with, ConnectorPool, ConnectorSelection, GenerationMode};
use forge_core::QuestionRecord;
use forge_core::Source;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// `base`, `augmented`, or pool text in the `[confidence]` / `[reflection]` format.
pub fn pool_from(spec: &str) -> Result<ConnectorPool, String> {
    match spec.trim() {
        "" | "base" => Ok(ConnectorPool::base()),
        "augmented" => Ok(ConnectorPool::augmented()),
        text => ConnectorPool::parse("custom", text).map_err(|e| e.to_string()),
    }
}

/// Renders the generation prompt. `per_list == 0` shows every phrase.
pub fn prompt_text(question: &str, mode: &str, pool: &str, per_list: usize, seed: u64) -> Result<String, String> {
    let mode: GenerationMode = mode.parse()?;
    let pool = pool_from(pool)?;
    let selection = match per_list {
        0 => ConnectorSelection::All,
        n => ConnectorSelection::Sample { per_list: n, seed },
    };
    let q = QuestionRecord::new("demo", question, Source::Custom);
    Ok(render_prompt_with(&q, mode, &pool, selection).text)
}

#[derive(Debug, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    /// Character offsets, for highlighting in JavaScript strings.
    pub char_start: usize,
    pub char_end: usize,
    pub phrase: String,
    pub kind: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Analysis {
    pub tokenizer: String,
    pub stats: TraceStats,
    pub confidence: usize,
    pub reflection: usize,
    pub per_phrase: Vec<(String, usize)>,
    pub spans: Vec<Span>,
    pub lint: LintReport,
}

pub fn analysis(thinking: &str, pool: &str, tokenizer: &str) -> Result<Analysis, String> {
    let tok: TokenizerSpec = tokenizer.parse()?;
    let matcher = ConnectorMatcher::new(&pool_from(pool)?);
    let counts = matcher.count(thinking);
    let char_at = |byte: usize| thinking[..byte].chars().count();
    Ok(Analysis {
        tokenizer: tok.to_string(),
        stats: text_stats(thinking, &tok, &matcher),
        confidence: counts.confidence_total,
        reflection: counts.reflection_total,
        per_phrase: counts.per_phrase.into_iter().collect(),
        spans: counts
            .positions
            .into_iter()
            .map(|m| Span {
                char_start: char_at(m.start),
                char_end: char_at(m.end),
                start: m.start,
                end: m.end,
                phrase: m.phrase,
                kind: m.kind.as_str(),
            })
            .collect(),
        lint: lint_with(thinking, &matcher),
    })
}

#[derive(Debug, Serialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub report: ValidationReport,
    pub thinking: Option<String>,
    pub answer: Option<String>,
}

pub fn verdict(raw: &str, min_chars: usize, max_chars: usize, retain_refusals: bool) -> Verdict {
    let gate = GateConfig {
        min_chars,
        max_chars,
        retain_refusals,
        ..GateConfig::default()
    };
    let (parsed, report) = validate_raw(raw, &gate);
    Verdict {
        report,
        thinking: parsed.as_ref().map(|t| t.thinking.clone()),
        answer: parsed.map(|t| t.answer),
    }
}

fn to_js<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[wasm_bindgen]
pub fn render_prompt(question: &str, mode: &str, pool: &str, per_list: usize, seed: u64) -> Result<String, JsError> {
    prompt_text(question, mode, pool, per_list, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn analyze_trace(thinking: &str, pool: &str, tokenizer: &str) -> Result<String, JsError> {
    analysis(thinking, pool, tokenizer)
        .map(|a| to_js(&a))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn validate_completion(raw: &str, min_chars: usize, max_chars: usize, retain_refusals: bool) -> String {
    to_js(&verdict(raw, min_chars, max_chars, retain_refusals))
}

#[wasm_bindgen]
pub fn pool_checksum(pool: &str) -> Result<String, JsError> {
    pool_from(pool).map(|p| p.checksum()).map_err(|e| JsError::new(&e))
}
