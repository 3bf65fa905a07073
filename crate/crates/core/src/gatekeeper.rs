//! Parsing completions into thinking/answer and deciding acceptance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytics::ConnectorMatcher;
use crate::promptkit::ConnectorPool;
use crate::REFUSAL_SENTINEL;

pub const THINKING_OPEN: &str = "<thinking>";
pub const THINKING_CLOSE: &str = "</thinking>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";
pub const FINAL_ANSWER: &str = "Final Answer:";

const MARKERS: [&str; 4] = [THINKING_OPEN, THINKING_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

/// Why a trace was rejected. Serialized names are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    TooShort,
    TooLong,
    FormatViolation,
    AnswerLeakInThinking,
    ThinkingLeakInAnswer,
    RefusalSentinel,
}

impl FailureReason {
    pub const ALL: [FailureReason; 6] = [
        FailureReason::TooShort,
        FailureReason::TooLong,
        FailureReason::FormatViolation,
        FailureReason::AnswerLeakInThinking,
        FailureReason::ThinkingLeakInAnswer,
        FailureReason::RefusalSentinel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::TooShort => "too_short",
            FailureReason::TooLong => "too_long",
            FailureReason::FormatViolation => "format_violation",
            FailureReason::AnswerLeakInThinking => "answer_leak_in_thinking",
            FailureReason::ThinkingLeakInAnswer => "thinking_leak_in_answer",
            FailureReason::RefusalSentinel => "refusal_sentinel",
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("format violation: {reason}")]
pub struct FormatViolation {
    pub reason: String,
}

fn violation(reason: impl Into<String>) -> FormatViolation {
    FormatViolation { reason: reason.into() }
}

/// A completion split into its thinking (`r`) and answer (`a`) sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTrace {
    pub thinking: String,
    pub answer: String,
    pub raw: String,
}

impl ParsedTrace {
    /// Rebuilds a trace from already separated parts.
    pub fn from_parts(thinking: impl Into<String>, answer: impl Into<String>) -> Self {
        let thinking = thinking.into();
        let answer = answer.into();
        let raw = format!("{THINKING_OPEN}{thinking}{THINKING_CLOSE}{ANSWER_OPEN}{answer}{ANSWER_CLOSE}");
        ParsedTrace { thinking, answer, raw }
    }
}

/// Extracts exactly one thinking block followed by exactly one answer block.
///
/// Marker strings inside the thinking block other than a nested
/// `<thinking>` are left for [`constraints_satisfied`] to report as leaks.
pub fn parse_trace(raw: &str) -> Result<ParsedTrace, FormatViolation> {
    let t_open = raw
        .find(THINKING_OPEN)
        .ok_or_else(|| violation("missing <thinking> block"))?;
    let t_body = t_open + THINKING_OPEN.len();
    let t_close = t_body
        + raw[t_body..]
            .find(THINKING_CLOSE)
            .ok_or_else(|| violation("unclosed <thinking> block"))?;
    let thinking = &raw[t_body..t_close];
    if thinking.contains(THINKING_OPEN) {
        return Err(violation("nested <thinking> marker"));
    }
    let after_thinking = t_close + THINKING_CLOSE.len();

    let a_open = match raw[after_thinking..].find(ANSWER_OPEN) {
        Some(i) => after_thinking + i,
        None if raw[..t_open].contains(ANSWER_OPEN) => {
            return Err(violation("<answer> block precedes the <thinking> block"))
        }
        None => return Err(violation("missing <answer> block")),
    };
    let a_body = a_open + ANSWER_OPEN.len();
    let a_close = a_body
        + raw[a_body..]
            .find(ANSWER_CLOSE)
            .ok_or_else(|| violation("unclosed <answer> block"))?;
    let answer = &raw[a_body..a_close];
    if answer.contains(ANSWER_OPEN) {
        return Err(violation("nested <answer> marker"));
    }
    let after_answer = a_close + ANSWER_CLOSE.len();

    for outside in [&raw[..t_open], &raw[after_thinking..a_open], &raw[after_answer..]] {
        if let Some(marker) = MARKERS.iter().find(|m| outside.contains(*m)) {
            return Err(violation(format!("duplicated or stray {marker} marker")));
        }
    }
    if !answer.contains(FINAL_ANSWER) {
        return Err(violation("answer does not contain 'Final Answer:'"));
    }
    Ok(ParsedTrace {
        thinking: thinking.to_string(),
        answer: answer.to_string(),
        raw: raw.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateConfig {
    pub min_chars: usize,
    pub max_chars: usize,
    /// Also treat a literal "Final Answer:" inside the thinking as leakage.
    pub final_answer_in_thinking_is_leak: bool,
    /// Accept traces carrying the refusal sentinel.
    pub retain_refusals: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            min_chars: 100,
            max_chars: 30_000,
            final_answer_in_thinking_is_leak: false,
            retain_refusals: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub failures: Vec<FailureReason>,
    /// Character count of the thinking section (0 when it could not be parsed).
    pub measured_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ValidationReport {
    fn from_failures(failures: Vec<FailureReason>, measured_len: usize, detail: Option<String>) -> Self {
        ValidationReport {
            passed: failures.is_empty(),
            failures,
            measured_len,
            detail,
        }
    }
}

/// The acceptance predicate with default bounds (100 ≤ |r| ≤ 30000 chars).
pub fn constraints_satisfied(t: &ParsedTrace) -> ValidationReport {
    constraints_satisfied_with(t, &GateConfig::default())
}

pub fn constraints_satisfied_with(t: &ParsedTrace, cfg: &GateConfig) -> ValidationReport {
    let len = t.thinking.chars().count();
    let mut failures = Vec::new();
    if len < cfg.min_chars {
        failures.push(FailureReason::TooShort);
    }
    if len > cfg.max_chars {
        failures.push(FailureReason::TooLong);
    }
    if t.thinking.contains(ANSWER_OPEN) || (cfg.final_answer_in_thinking_is_leak && t.thinking.contains(FINAL_ANSWER)) {
        failures.push(FailureReason::AnswerLeakInThinking);
    }
    if t.answer.contains(THINKING_OPEN) {
        failures.push(FailureReason::ThinkingLeakInAnswer);
    }
    if !cfg.retain_refusals && (t.thinking.contains(REFUSAL_SENTINEL) || t.answer.contains(REFUSAL_SENTINEL)) {
        failures.push(FailureReason::RefusalSentinel);
    }
    ValidationReport::from_failures(failures, len, None)
}

/// Parses and checks a raw completion in one step.
pub fn validate_raw(raw: &str, cfg: &GateConfig) -> (Option<ParsedTrace>, ValidationReport) {
    match parse_trace(raw) {
        Ok(t) => {
            let report = constraints_satisfied_with(&t, cfg);
            (Some(t), report)
        }
        Err(v) => (
            None,
            ValidationReport::from_failures(vec![FailureReason::FormatViolation], 0, Some(v.reason)),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    /// Byte offset of the first connector in the thinking text.
    pub position: usize,
    pub first: String,
    pub second: String,
}

/// Advisory connector-placement findings; never affects acceptance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintReport {
    pub adjacency_violations: Vec<Adjacency>,
    pub connector_at_end: bool,
}

impl LintReport {
    pub fn is_clean(&self) -> bool {
        self.adjacency_violations.is_empty() && !self.connector_at_end
    }
}

fn is_separator(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || ('\u{2000}'..='\u{206F}').contains(&c)
}

pub fn lint_connectors(t: &ParsedTrace, pool: &ConnectorPool) -> LintReport {
    lint_with(&t.thinking, &ConnectorMatcher::new(pool))
}

/// Flags connectors separated only by whitespace or punctuation, and a
/// connector as the last non-whitespace content.
pub fn lint_with(thinking: &str, matcher: &ConnectorMatcher) -> LintReport {
    let matches = matcher.find(thinking);
    let adjacency_violations = matches
        .windows(2)
        .filter(|w| thinking[w[0].end..w[1].start].chars().all(is_separator))
        .map(|w| Adjacency {
            position: w[0].start,
            first: w[0].phrase.clone(),
            second: w[1].phrase.clone(),
        })
        .collect();
    let connector_at_end = matches.last().is_some_and(|m| thinking[m.end..].trim().is_empty());
    LintReport {
        adjacency_violations,
        connector_at_end,
    }
}
