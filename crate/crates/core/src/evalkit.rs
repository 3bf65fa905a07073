//! Scoring of model-response dumps: Acc@k, Pass@1, Success and ART.
//!
//! Per item with k responses:
//! - Success = successes / k, where a success is a response whose answer
//!   can be extracted under the [`FormatMode`];
//! - Pass@1 = correct / successes (0 when nothing was extracted);
//! - Acc@k = 1 when all k responses are extracted and correct, else 0;
//! - ART = mean reasoning tokens over the successful responses.
//!
//! Groups are unweighted means over their items (×100 for the rates) and the
//! AVG row is the unweighted mean of the group rows.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::Tokenizer;
use crate::gatekeeper::{parse_trace, ANSWER_CLOSE, ANSWER_OPEN, FINAL_ANSWER, THINKING_CLOSE, THINKING_OPEN};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// One question with its gold answer and k sampled responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub question_id: String,
    pub task_type: String,
    pub gold: String,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatMode {
    /// `<answer>` block starting with "Final Answer:", after a thinking block.
    Strict,
    #[default]
    Loose,
}

impl FormatMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FormatMode::Strict => "strict",
            FormatMode::Loose => "loose",
        }
    }
}

impl fmt::Display for FormatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(FormatMode::Strict),
            "loose" => Ok(FormatMode::Loose),
            _ => Err(format!("unknown format mode {s:?} (expected strict or loose)")),
        }
    }
}

/// Which rule produced an extracted answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionRule {
    Strict,
    AnswerBlock,
    FinalAnswer,
    Boxed,
    LastLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub answer: Option<String>,
    pub reasoning_tokens: usize,
    pub rule: Option<ExtractionRule>,
}

impl Extraction {
    fn failed() -> Self {
        Extraction {
            answer: None,
            reasoning_tokens: 0,
            rule: None,
        }
    }

    pub fn success(&self) -> bool {
        self.answer.is_some()
    }
}

fn strip_markers(text: &str) -> String {
    let mut s = text.to_string();
    for m in [THINKING_OPEN, THINKING_CLOSE, ANSWER_OPEN, ANSWER_CLOSE] {
        s = s.replace(m, " ");
    }
    s
}

fn nonempty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn after_final_answer(s: &str) -> &str {
    match s.rfind(FINAL_ANSWER) {
        Some(i) => &s[i + FINAL_ANSWER.len()..],
        None => s,
    }
}

type Extractor = fn(&str) -> Option<(usize, String)>;

fn answer_block(text: &str) -> Option<(usize, String)> {
    let open = text.rfind(ANSWER_OPEN)?;
    let body = open + ANSWER_OPEN.len();
    let close = body + text[body..].find(ANSWER_CLOSE)?;
    let answer = nonempty(after_final_answer(&text[body..close]))?;
    Some((open, answer))
}

fn final_answer_line(text: &str) -> Option<(usize, String)> {
    let at = text.rfind(FINAL_ANSWER)?;
    let rest = &text[at + FINAL_ANSWER.len()..];
    let line = rest.lines().next().unwrap_or("");
    let line = line.split(ANSWER_CLOSE).next().unwrap_or("");
    Some((at, nonempty(line)?))
}

fn last_boxed(text: &str) -> Option<(usize, String)> {
    const BOXED: &str = "\\boxed{";
    let at = text.rfind(BOXED)?;
    let body = at + BOXED.len();
    let mut depth = 1usize;
    for (i, c) in text[body..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((at, nonempty(&text[body..body + i])?));
                }
            }
            _ => {}
        }
    }
    None
}

fn last_line(text: &str) -> Option<(usize, String)> {
    let trimmed = text.trim_end();
    let start = trimmed.rfind('\n').map_or(0, |i| i + 1);
    let line = trimmed[start..].trim();
    let lower = line.to_lowercase();
    let answer = match lower.rfind("answer is") {
        // lowercasing can shift byte offsets for some scripts; fall back to the whole line
        Some(i) if lower.len() == line.len() => &line[i + "answer is".len()..],
        _ => line,
    };
    let answer = answer.trim().trim_start_matches(':').trim_end_matches('.').trim();
    Some((start, nonempty(answer)?))
}

/// Extracts the final answer and counts reasoning tokens.
///
/// Strict takes the answer block of a well-formed trace, which must start
/// with "Final Answer:", and counts tokens of the thinking block. Loose
/// tries, in order: the last `<answer>` block, the last "Final Answer:"
/// line, the last `\boxed{...}`, then the last non-empty line (reading
/// "The answer is X." as X). Reasoning tokens are those of everything before
/// the matched anchor, with trace markers removed.
pub fn parse_response(text: &str, mode: FormatMode, tok: &dyn Tokenizer) -> Extraction {
    match mode {
        FormatMode::Strict => {
            let Ok(t) = parse_trace(text) else {
                return Extraction::failed();
            };
            let Some(rest) = t.answer.trim_start().strip_prefix(FINAL_ANSWER) else {
                return Extraction::failed();
            };
            match nonempty(rest) {
                Some(answer) => Extraction {
                    answer: Some(answer),
                    reasoning_tokens: tok.count(&t.thinking),
                    rule: Some(ExtractionRule::Strict),
                },
                None => Extraction::failed(),
            }
        }
        FormatMode::Loose => {
            let rules: [(ExtractionRule, Extractor); 4] = [
                (ExtractionRule::AnswerBlock, answer_block),
                (ExtractionRule::FinalAnswer, final_answer_line),
                (ExtractionRule::Boxed, last_boxed),
                (ExtractionRule::LastLine, last_line),
            ];
            for (rule, extract) in rules {
                if let Some((anchor, answer)) = extract(text) {
                    return Extraction {
                        answer: Some(answer),
                        reasoning_tokens: tok.count(&strip_markers(&text[..anchor])),
                        rule: Some(rule),
                    };
                }
            }
            Extraction::failed()
        }
    }
}

/// Decides whether an extracted answer matches the gold answer.
pub trait AnswerMatcher: Send + Sync {
    fn matches(&self, predicted: &str, gold: &str) -> bool;
}

/// Trimmed, case-folded, whitespace-collapsed exact match with numbers
/// compared in canonical form.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultMatcher;

/// `"1,200.50"` → `"1200.5"`, `"007"` → `"7"`, `"-0.0"` → `"0"`. Non-numbers
/// come back lowercased with whitespace collapsed.
pub fn normalize_answer(s: &str) -> String {
    let folded = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    canonical_number(&folded).unwrap_or(folded)
}

fn canonical_number(s: &str) -> Option<String> {
    let s = s.replace(',', "");
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(&s)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int = int.trim_start_matches('0');
    let frac = frac.trim_end_matches('0');
    let mut out = String::new();
    if neg && !(int.is_empty() && frac.is_empty()) {
        out.push('-');
    }
    out.push_str(if int.is_empty() { "0" } else { int });
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    Some(out)
}

impl AnswerMatcher for DefaultMatcher {
    fn matches(&self, predicted: &str, gold: &str) -> bool {
        normalize_answer(predicted) == normalize_answer(gold)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub success: bool,
    /// Only ever true when `success` is.
    pub correct: bool,
    pub reasoning_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub question_id: String,
    pub task_type: String,
    pub k: usize,
    pub successes: usize,
    pub correct: usize,
    /// 0 or 1.
    pub acc_at_k: f64,
    pub pass_at_1: f64,
    pub success_rate: f64,
    /// 0 when `art_undefined`.
    pub art: f64,
    /// No successful response to average over.
    pub art_undefined: bool,
    pub responses: Vec<ScoredResponse>,
}

pub fn score_item(item: &EvalItem, mode: FormatMode, matcher: &dyn AnswerMatcher, tok: &dyn Tokenizer) -> ItemScore {
    let responses: Vec<ScoredResponse> = item
        .responses
        .iter()
        .map(|text| {
            let ex = parse_response(text, mode, tok);
            let correct = ex.answer.as_deref().is_some_and(|a| matcher.matches(a, &item.gold));
            ScoredResponse {
                success: ex.success(),
                correct,
                reasoning_tokens: ex.reasoning_tokens,
                extracted: ex.answer,
            }
        })
        .collect();
    score_responses(&item.question_id, &item.task_type, responses)
}

/// Item metrics from already judged responses.
pub fn score_responses(question_id: &str, task_type: &str, responses: Vec<ScoredResponse>) -> ItemScore {
    let k = responses.len();
    let successes = responses.iter().filter(|r| r.success).count();
    let correct = responses.iter().filter(|r| r.success && r.correct).count();
    let art_sum: usize = responses.iter().filter(|r| r.success).map(|r| r.reasoning_tokens).sum();
    ItemScore {
        question_id: question_id.to_string(),
        task_type: task_type.to_string(),
        k,
        successes,
        correct,
        acc_at_k: if k > 0 && correct == k { 1.0 } else { 0.0 },
        pass_at_1: if successes > 0 {
            correct as f64 / successes as f64
        } else {
            0.0
        },
        success_rate: if k > 0 { successes as f64 / k as f64 } else { 0.0 },
        art: if successes > 0 {
            art_sum as f64 / successes as f64
        } else {
            0.0
        },
        art_undefined: successes == 0,
        responses,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub group: String,
    pub acc_at_k: f64,
    pub pass_at_1: f64,
    pub success: f64,
    pub art: f64,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub k: usize,
    /// Task-type rows sorted by group name.
    pub rows: Vec<MetricsRow>,
    pub avg: MetricsRow,
    /// Items whose ART was undefined and left out of their group's ART.
    pub art_undefined: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Unweighted mean of rows, labelled AVG.
pub fn average_rows(rows: &[MetricsRow]) -> MetricsRow {
    MetricsRow {
        group: "AVG".to_string(),
        acc_at_k: mean(rows.iter().map(|r| r.acc_at_k)),
        pass_at_1: mean(rows.iter().map(|r| r.pass_at_1)),
        success: mean(rows.iter().map(|r| r.success)),
        art: mean(rows.iter().map(|r| r.art)),
        n_items: rows.iter().map(|r| r.n_items).sum(),
    }
}

pub fn aggregate(scores: &[ItemScore]) -> Result<MetricsTable, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut groups: BTreeMap<&str, Vec<&ItemScore>> = BTreeMap::new();
    for s in scores {
        groups.entry(&s.task_type).or_default().push(s);
    }
    let rows: Vec<MetricsRow> = groups
        .into_iter()
        .map(|(group, items)| MetricsRow {
            group: group.to_string(),
            acc_at_k: 100.0 * mean(items.iter().map(|s| s.acc_at_k)),
            pass_at_1: 100.0 * mean(items.iter().map(|s| s.pass_at_1)),
            success: 100.0 * mean(items.iter().map(|s| s.success_rate)),
            art: mean(items.iter().filter(|s| !s.art_undefined).map(|s| s.art)),
            n_items: items.len(),
        })
        .collect();
    let avg = average_rows(&rows);
    Ok(MetricsTable {
        k: scores.iter().map(|s| s.k).max().unwrap_or(0),
        rows,
        avg,
        art_undefined: scores.iter().filter(|s| s.art_undefined).count(),
    })
}

/// Exact-match accuracy ×100 of single-response items, taking the answer
/// with the loose rules.
pub fn score_benchmark(items: &[EvalItem], matcher: &dyn AnswerMatcher) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let tok = crate::analytics::TokenizerSpec::Whitespace;
    let correct = items
        .iter()
        .filter(|item| {
            item.responses.first().is_some_and(|r| {
                parse_response(r, FormatMode::Loose, &tok)
                    .answer
                    .is_some_and(|a| matcher.matches(&a, &item.gold))
            })
        })
        .count();
    100.0 * correct as f64 / items.len() as f64
}

/// Reads a response dump, one `{question_id, task_type, gold, responses}`
/// object per line. With `expect_k`, every item must carry exactly that many
/// responses.
pub fn load_responses(path: &Path, expect_k: Option<usize>) -> Result<Vec<EvalItem>, EvalError> {
    let rows: Vec<(usize, EvalItem)> = jsonl::read(path)?;
    let mut items = Vec::with_capacity(rows.len());
    for (line, item) in rows {
        let invalid = |message: String| EvalError::Invalid { line, message };
        if item.responses.is_empty() {
            return Err(invalid(format!("{}: no responses", item.question_id)));
        }
        if item.gold.trim().is_empty() {
            return Err(invalid(format!("{}: empty gold answer", item.question_id)));
        }
        if let Some(k) = expect_k {
            if item.responses.len() != k {
                return Err(invalid(format!(
                    "{}: expected {k} responses, found {}",
                    item.question_id,
                    item.responses.len()
                )));
            }
        }
        items.push(item);
    }
    Ok(items)
}

pub fn write_responses(path: &Path, items: &[EvalItem]) -> Result<(), EvalError> {
    jsonl::write(path, items)?;
    Ok(())
}

/// Table in the column order Acc@k, Pass@1, Success, ART, with AVG last.
pub fn write_metrics_csv<W: Write>(table: &MetricsTable, w: W) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    let acc = format!("Acc@{}", table.k);
    out.write_record(["Task", acc.as_str(), "Pass@1", "Success", "ART", "Items"])?;
    for r in table.rows.iter().chain(std::iter::once(&table.avg)) {
        out.write_record([
            r.group.clone(),
            format!("{:.2}", r.acc_at_k),
            format!("{:.2}", r.pass_at_1),
            format!("{:.2}", r.success),
            format!("{:.2}", r.art),
            r.n_items.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
