//! Question ingestion, merging and duplicate removal.
//!
//! Inputs are line-delimited JSON, one `{id?, question, meta?}` object per
//! line. Records without an explicit id get a content-derived one, so the
//! same file always yields the same ids.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("{path}:{line}: question text is empty")]
    EmptyQuestion { path: String, line: usize },
    #[error("{path}: duplicate id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        path: String,
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("{path}: corpus contains no records")]
    EmptyCorpus { path: String },
    #[error("id collision across merged sets: {}", .0.join(", "))]
    IdCollision(Vec<String>),
    #[error("threshold must lie in [0, 1], got {0}")]
    BadThreshold(f64),
}

impl From<JsonlError> for CorpusError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io { path, source } => CorpusError::Io {
                path: path.display().to_string(),
                source,
            },
            JsonlError::Parse { path, line, source } => CorpusError::Malformed {
                path: path.display().to_string(),
                line,
                message: source.to_string(),
            },
        }
    }
}

/// Where a question came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    S1,
    Limo,
    Custom,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::S1 => "s1",
            Source::Limo => "limo",
            Source::Custom => "custom",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Source::S1),
            "limo" => Ok(Source::Limo),
            "custom" => Ok(Source::Custom),
            _ => Err(format!("unknown source {s:?} (expected s1, limo or custom)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub text: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl QuestionRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: Source) -> Self {
        QuestionRecord {
            id: id.into(),
            text: text.into(),
            source,
            meta: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// An ordered, id-unique collection of questions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuestionSet {
    pub records: Vec<QuestionRecord>,
    pub provenance: Vec<SourceDescriptor>,
}

impl QuestionSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// Builds an in-memory set, checking id uniqueness.
    pub fn from_records(records: Vec<QuestionRecord>, source: Source) -> Result<Self, CorpusError> {
        let set = QuestionSet {
            records,
            provenance: vec![SourceDescriptor { source, path: None }],
        };
        let dups = set.duplicate_ids();
        if dups.is_empty() {
            Ok(set)
        } else {
            Err(CorpusError::IdCollision(dups))
        }
    }

    fn duplicate_ids(&self) -> Vec<String> {
        let mut seen = HashMap::new();
        let mut dups = Vec::new();
        for r in &self.records {
            let n = seen.entry(r.id.as_str()).or_insert(0usize);
            *n += 1;
            if *n == 2 {
                dups.push(r.id.clone());
            }
        }
        dups
    }

    /// Writes the set back out in the input format.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let rows: Vec<InputRow> = self
            .records
            .iter()
            .map(|r| InputRow {
                id: Some(serde_json::Value::String(r.id.clone())),
                question: r.text.clone(),
                meta: (!r.meta.is_empty()).then(|| r.meta.clone()),
            })
            .collect();
        jsonl::write(path, &rows)?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InputRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<serde_json::Value>,
    question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<BTreeMap<String, serde_json::Value>>,
}

fn content_id(source: Source, text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    format!("{}-{}", source, &hex::encode(digest)[..12])
}

/// Loads a line-delimited question file.
pub fn load_questions(path: &Path, source: Source) -> Result<QuestionSet, CorpusError> {
    let display = path.display().to_string();
    if !path.exists() {
        return Err(CorpusError::Io {
            path: display,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    let rows: Vec<(usize, InputRow)> = jsonl::read(path)?;
    if rows.is_empty() {
        return Err(CorpusError::EmptyCorpus { path: display });
    }

    let mut first_line: HashMap<String, usize> = HashMap::new();
    let mut hash_uses: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if row.question.trim().is_empty() {
            return Err(CorpusError::EmptyQuestion { path: display, line });
        }
        let id = match row.id {
            Some(serde_json::Value::String(s)) if !s.is_empty() => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(serde_json::Value::Null) | None => {
                let base = content_id(source, &row.question);
                let uses = hash_uses.entry(base.clone()).or_insert(0);
                *uses += 1;
                if *uses == 1 {
                    base
                } else {
                    format!("{base}-{uses}")
                }
            }
            Some(other) => {
                return Err(CorpusError::Malformed {
                    path: display,
                    line,
                    message: format!("id must be a string or number, got {other}"),
                })
            }
        };
        if let Some(&first) = first_line.get(&id) {
            return Err(CorpusError::DuplicateId {
                path: display,
                id,
                first_line: first,
                second_line: line,
            });
        }
        first_line.insert(id.clone(), line);
        records.push(QuestionRecord {
            id,
            text: row.question,
            source,
            meta: row.meta.unwrap_or_default(),
        });
    }

    Ok(QuestionSet {
        records,
        provenance: vec![SourceDescriptor {
            source,
            path: Some(display),
        }],
    })
}

/// Concatenates sets in argument order; ids must stay unique.
pub fn merge(sets: &[QuestionSet]) -> Result<QuestionSet, CorpusError> {
    let mut out = QuestionSet::default();
    for set in sets {
        out.records.extend(set.records.iter().cloned());
        out.provenance.extend(set.provenance.iter().cloned());
    }
    let dups = out.duplicate_ids();
    if dups.is_empty() {
        Ok(out)
    } else {
        Err(CorpusError::IdCollision(dups))
    }
}

/// One removed record and the earlier survivor it duplicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub dropped_id: String,
    pub kept_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dedup {
    pub set: QuestionSet,
    pub drops: Vec<DropRecord>,
}

/// Collapses whitespace runs to one space and trims; case is preserved.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes records whose whitespace-collapsed text equals an earlier record's.
pub fn dedup_exact(qs: &QuestionSet) -> Dedup {
    let mut kept_by_text: HashMap<String, String> = HashMap::new();
    let mut records = Vec::new();
    let mut drops = Vec::new();
    for r in &qs.records {
        let key = collapse_whitespace(&r.text);
        match kept_by_text.get(&key) {
            Some(kept) => drops.push(DropRecord {
                dropped_id: r.id.clone(),
                kept_id: kept.clone(),
                similarity: 1.0,
            }),
            None => {
                kept_by_text.insert(key, r.id.clone());
                records.push(r.clone());
            }
        }
    }
    Dedup {
        set: QuestionSet {
            records,
            provenance: qs.provenance.clone(),
        },
        drops,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearDedupConfig {
    /// Minimum normalized similarity at which a later record is dropped.
    pub threshold: f64,
    /// Compare lowercased text.
    pub case_insensitive: bool,
}

impl Default for NearDedupConfig {
    fn default() -> Self {
        NearDedupConfig {
            threshold: 0.9,
            case_insensitive: true,
        }
    }
}

/// Text form used for near-duplicate comparison.
pub fn near_key(text: &str, case_insensitive: bool) -> Vec<char> {
    let collapsed = collapse_whitespace(text);
    if case_insensitive {
        collapsed.to_lowercase().chars().collect()
    } else {
        collapsed.chars().collect()
    }
}

/// `1 - distance / max(len)`; two empty strings are identical.
pub fn similarity_from_distance(distance: usize, max_len: usize) -> f64 {
    if max_len == 0 {
        1.0
    } else {
        1.0 - distance as f64 / max_len as f64
    }
}

/// Largest edit distance that still reaches `threshold` for strings whose
/// longer side has `max_len` chars, or `None` if no distance does.
fn distance_budget(threshold: f64, max_len: usize) -> Option<usize> {
    if max_len == 0 {
        return (1.0 >= threshold).then_some(0);
    }
    let mut k = (((1.0 - threshold) * max_len as f64).floor().max(0.0) as usize).min(max_len);
    while k < max_len && similarity_from_distance(k + 1, max_len) >= threshold {
        k += 1;
    }
    loop {
        if similarity_from_distance(k, max_len) >= threshold {
            return Some(k);
        }
        if k == 0 {
            return None;
        }
        k -= 1;
    }
}

/// Levenshtein distance over chars, or `None` once it must exceed `limit`.
pub fn bounded_levenshtein(a: &[char], b: &[char], limit: usize) -> Option<usize> {
    let (m, n) = (a.len(), b.len());
    if m.abs_diff(n) > limit {
        return None;
    }
    if m == 0 || n == 0 {
        return Some(m.max(n));
    }
    let inf = limit + 1;
    let mut prev: Vec<usize> = (0..=n).map(|j| if j <= limit { j } else { inf }).collect();
    let mut cur = vec![inf; n + 1];
    for i in 1..=m {
        let lo = i.saturating_sub(limit).max(1);
        let hi = (i + limit).min(n);
        cur[0] = if i <= limit { i } else { inf };
        if lo > 1 {
            cur[lo - 1] = inf;
        }
        let mut row_min = cur[0];
        for j in lo..=hi {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1).min(inf);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if hi < n {
            cur[hi + 1] = inf;
        }
        if row_min > limit {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (prev[n] <= limit).then_some(prev[n])
}

const HIST_BUCKETS: usize = 64;

struct Survivor {
    index: usize,
    key: Vec<char>,
    hist: [u32; HIST_BUCKETS],
}

fn histogram(key: &[char]) -> [u32; HIST_BUCKETS] {
    let mut h = [0u32; HIST_BUCKETS];
    for &c in key {
        h[c as usize % HIST_BUCKETS] += 1;
    }
    h
}

/// Every edit moves at most two units of histogram mass, so half the L1
/// distance between bucketed histograms bounds the edit distance from below.
fn histogram_lower_bound(a: &[u32; HIST_BUCKETS], b: &[u32; HIST_BUCKETS]) -> usize {
    let l1: u32 = a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum();
    (l1 as usize).div_ceil(2)
}

fn near_match(key: &[char], hist: &[u32; HIST_BUCKETS], s: &Survivor, threshold: f64) -> Option<f64> {
    let max_len = key.len().max(s.key.len());
    let budget = distance_budget(threshold, max_len)?;
    if key.len().abs_diff(s.key.len()) > budget || histogram_lower_bound(hist, &s.hist) > budget {
        return None;
    }
    let d = bounded_levenshtein(key, &s.key, budget)?;
    Some(similarity_from_distance(d, max_len))
}

const PARALLEL_CUTOFF: usize = 512;

/// Greedy near-duplicate removal with the default text normalization.
pub fn dedup_near(qs: &QuestionSet, threshold: f64) -> Result<Dedup, CorpusError> {
    dedup_near_with(
        qs,
        &NearDedupConfig {
            threshold,
            ..NearDedupConfig::default()
        },
    )
}

/// Scans left to right; a record is dropped when its similarity to any earlier
/// survivor reaches the threshold. The first such survivor is logged.
pub fn dedup_near_with(qs: &QuestionSet, cfg: &NearDedupConfig) -> Result<Dedup, CorpusError> {
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(CorpusError::BadThreshold(cfg.threshold));
    }
    let mut survivors: Vec<Survivor> = Vec::new();
    let mut drops = Vec::new();
    for (index, r) in qs.records.iter().enumerate() {
        let key = near_key(&r.text, cfg.case_insensitive);
        let hist = histogram(&key);
        let hit = if survivors.len() >= PARALLEL_CUTOFF {
            survivors
                .par_iter()
                .map(|s| near_match(&key, &hist, s, cfg.threshold))
                .position_first(|m| m.is_some())
                .map(|pos| (pos, near_match(&key, &hist, &survivors[pos], cfg.threshold)))
        } else {
            survivors
                .iter()
                .enumerate()
                .find_map(|(pos, s)| near_match(&key, &hist, s, cfg.threshold).map(|sim| (pos, Some(sim))))
        };
        match hit {
            Some((pos, Some(similarity))) => drops.push(DropRecord {
                dropped_id: r.id.clone(),
                kept_id: qs.records[survivors[pos].index].id.clone(),
                similarity,
            }),
            _ => survivors.push(Survivor { index, key, hist }),
        }
    }
    let records = survivors.iter().map(|s| qs.records[s.index].clone()).collect();
    Ok(Dedup {
        set: QuestionSet {
            records,
            provenance: qs.provenance.clone(),
        },
        drops,
    })
}

/// Writes a drop log, one `{dropped_id, kept_id, similarity}` per line.
pub fn write_drop_log(path: &Path, drops: &[DropRecord]) -> Result<(), CorpusError> {
    jsonl::write(path, drops)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn set(texts: &[&str]) -> QuestionSet {
        let records = texts
            .iter()
            .enumerate()
            .map(|(i, t)| QuestionRecord::new(format!("q{i}"), *t, Source::Custom))
            .collect();
        QuestionSet::from_records(records, Source::Custom).unwrap()
    }

    fn texts(qs: &QuestionSet) -> Vec<&str> {
        qs.records.iter().map(|r| r.text.as_str()).collect()
    }

    fn full_levenshtein(a: &[char], b: &[char]) -> usize {
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in dp.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in dp[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = usize::from(a[i - 1] != b[j - 1]);
                dp[i][j] = (dp[i - 1][j - 1] + c).min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
            }
        }
        dp[a.len()][b.len()]
    }

    fn write_file(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_preserves_order_and_hashes_missing_ids() {
        let f = write_file(&[
            r#"{"id":"a","question":"First?"}"#,
            r#"{"question":"Second?","meta":{"level":3}}"#,
            r#"{"id":7,"question":"Third?"}"#,
        ]);
        let qs = load_questions(f.path(), Source::S1).unwrap();
        assert_eq!(texts(&qs), ["First?", "Second?", "Third?"]);
        assert_eq!(qs.records[0].id, "a");
        assert!(qs.records[1].id.starts_with("s1-"));
        assert_eq!(qs.records[2].id, "7");
        assert_eq!(qs.records[1].meta["level"], 3);
        let again = load_questions(f.path(), Source::S1).unwrap();
        assert_eq!(qs, again);
    }

    #[test]
    fn repeated_unlabelled_text_gets_distinct_ids() {
        let f = write_file(&[r#"{"question":"Same?"}"#, r#"{"question":"Same?"}"#]);
        let qs = load_questions(f.path(), Source::Limo).unwrap();
        assert_ne!(qs.records[0].id, qs.records[1].id);
    }

    #[test]
    fn duplicate_explicit_ids_name_both_rows() {
        let f = write_file(&[
            r#"{"id":"x","question":"A?"}"#,
            r#"{"id":"y","question":"B?"}"#,
            r#"{"id":"x","question":"C?"}"#,
        ]);
        match load_questions(f.path(), Source::S1).unwrap_err() {
            CorpusError::DuplicateId {
                id,
                first_line,
                second_line,
                ..
            } => assert_eq!((id.as_str(), first_line, second_line), ("x", 1, 3)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn load_errors() {
        let bad = write_file(&[r#"{"question":"ok"}"#, r#"{"question": 3"#]);
        assert!(matches!(
            load_questions(bad.path(), Source::S1).unwrap_err(),
            CorpusError::Malformed { line: 2, .. }
        ));
        let blank = write_file(&[r#"{"question":"   "}"#]);
        assert!(matches!(
            load_questions(blank.path(), Source::S1).unwrap_err(),
            CorpusError::EmptyQuestion { line: 1, .. }
        ));
        let empty = write_file(&[]);
        assert!(matches!(
            load_questions(empty.path(), Source::S1).unwrap_err(),
            CorpusError::EmptyCorpus { .. }
        ));
        assert!(matches!(
            load_questions(Path::new("/nonexistent/q.jsonl"), Source::S1).unwrap_err(),
            CorpusError::Io { .. }
        ));
    }

    #[test]
    fn merge_keeps_order_and_provenance() {
        let a = write_file(&[r#"{"id":"s1-1","question":"A?"}"#]);
        let b = write_file(&[r#"{"id":"limo-1","question":"B?"}"#]);
        let s1 = load_questions(a.path(), Source::S1).unwrap();
        let limo = load_questions(b.path(), Source::Limo).unwrap();
        let all = merge(&[s1.clone(), limo]).unwrap();
        assert_eq!(texts(&all), ["A?", "B?"]);
        let tags: Vec<Source> = all.provenance.iter().map(|p| p.source).collect();
        assert_eq!(tags, [Source::S1, Source::Limo]);
        assert_eq!(merge(std::slice::from_ref(&s1)).unwrap(), s1);
        assert_eq!(
            merge(&[s1.clone(), QuestionSet::default()]).unwrap().records,
            s1.records
        );
    }

    #[test]
    fn merge_rejects_shared_ids() {
        let x = set(&["A?"]);
        match merge(&[x.clone(), x]).unwrap_err() {
            CorpusError::IdCollision(ids) => assert_eq!(ids, ["q0"]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn exact_dedup_examples() {
        assert_eq!(texts(&dedup_exact(&set(&["A?", "A?", "B?"])).set), ["A?", "B?"]);
        assert_eq!(texts(&dedup_exact(&set(&["A?", "a?"])).set), ["A?", "a?"]);
        assert_eq!(texts(&dedup_exact(&set(&["A  ?", "A ?"])).set), ["A  ?"]);
    }

    #[test]
    fn near_dedup_examples() {
        let out = dedup_near(&set(&["same text", "same text"]), 1.0).unwrap();
        assert_eq!(out.set.len(), 1);
        assert_eq!(out.drops[0].similarity, 1.0);
        // dist 1 over 4 chars: similarity 0.75 stays below 0.9
        let out = dedup_near(&set(&["abcd", "abce"]), 0.9).unwrap();
        assert_eq!(out.set.len(), 2);
        let out = dedup_near(&set(&["abcd", "abce"]), 0.75).unwrap();
        assert_eq!(out.set.len(), 1);
        assert_eq!(out.drops[0].kept_id, "q0");
    }

    #[test]
    fn near_dedup_logs_earliest_matching_survivor() {
        let out = dedup_near(&set(&["abcdefghij", "abcdefghix", "abcdefghiy"]), 0.85).unwrap();
        assert_eq!(out.set.len(), 1);
        assert!(out.drops.iter().all(|d| d.kept_id == "q0"));
    }

    #[test]
    fn threshold_outside_unit_interval_is_rejected() {
        assert!(dedup_near(&set(&["a"]), 1.5).is_err());
        assert!(dedup_near(&set(&["a"]), -0.1).is_err());
    }

    #[test]
    fn distance_budget_matches_definition() {
        for max_len in 0..60 {
            for t in [0.0, 0.1, 0.5, 0.75, 0.9, 0.95, 1.0] {
                let expected = (0..=max_len).rev().find(|&d| similarity_from_distance(d, max_len) >= t);
                assert_eq!(distance_budget(t, max_len), expected, "t={t} len={max_len}");
            }
        }
    }

    proptest! {
        #[test]
        fn bounded_levenshtein_agrees_with_full_table(
            a in "[abc ]{0,24}",
            b in "[abc ]{0,24}",
            limit in 0usize..30,
        ) {
            let a: Vec<char> = a.chars().collect();
            let b: Vec<char> = b.chars().collect();
            let full = full_levenshtein(&a, &b);
            let bounded = bounded_levenshtein(&a, &b, limit);
            prop_assert_eq!(bounded, (full <= limit).then_some(full));
        }

        #[test]
        fn histogram_bound_never_exceeds_distance(a in "[a-zA-Z ]{0,30}", b in "[a-zA-Z ]{0,30}") {
            let a: Vec<char> = a.chars().collect();
            let b: Vec<char> = b.chars().collect();
            prop_assert!(histogram_lower_bound(&histogram(&a), &histogram(&b)) <= full_levenshtein(&a, &b));
        }

        #[test]
        fn dedups_are_idempotent_subsequences(
            raw in proptest::collection::vec("[ab ]{1,6}", 0..25),
            threshold in 0.5f64..=1.0,
        ) {
            let texts: Vec<&str> = raw.iter().map(String::as_str).collect();
            let qs = set(&texts);
            for out in [dedup_exact(&qs), dedup_near(&qs, threshold).unwrap()] {
                let mut it = qs.records.iter();
                for kept in &out.set.records {
                    prop_assert!(it.any(|r| r == kept));
                }
                prop_assert_eq!(out.set.len() + out.drops.len(), qs.len());
            }
            let once = dedup_exact(&qs).set;
            prop_assert_eq!(&dedup_exact(&once).set, &once);
            let once = dedup_near(&qs, threshold).unwrap().set;
            prop_assert_eq!(&dedup_near(&once, threshold).unwrap().set, &once);
        }

        #[test]
        fn drop_log_recomputes_above_threshold(
            raw in proptest::collection::vec("[abc]{1,8}", 0..25),
            threshold in 0.3f64..=1.0,
        ) {
            let texts: Vec<&str> = raw.iter().map(String::as_str).collect();
            let qs = set(&texts);
            let out = dedup_near(&qs, threshold).unwrap();
            let by_id: HashMap<&str, &str> = qs.records.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
            for d in &out.drops {
                let a = near_key(by_id[d.dropped_id.as_str()], true);
                let b = near_key(by_id[d.kept_id.as_str()], true);
                let sim = similarity_from_distance(full_levenshtein(&a, &b), a.len().max(b.len()));
                prop_assert!(sim >= threshold);
                prop_assert_eq!(sim, d.similarity);
                prop_assert!(out.set.ids().any(|id| id == d.kept_id));
            }
        }

        #[test]
        fn unit_threshold_case_sensitive_equals_exact(raw in proptest::collection::vec("[aA ]{1,5}", 0..20)) {
            let texts: Vec<&str> = raw.iter().map(String::as_str).collect();
            let qs = set(&texts);
            let cfg = NearDedupConfig { threshold: 1.0, case_insensitive: false };
            prop_assert_eq!(dedup_near_with(&qs, &cfg).unwrap().set, dedup_exact(&qs).set);
        }
    }
}
