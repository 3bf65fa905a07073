use std::collections::BTreeMap;

use aho_corasick::{AhoCorasick, MatchKind};
use serde::{Deserialize, Serialize};

use crate::promptkit::ConnectorPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorKind {
    Confidence,
    Reflection,
}

impl ConnectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnectorKind::Confidence => "confidence",
            ConnectorKind::Reflection => "reflection",
        }
    }
}

fn fold_quote(c: char) -> char {
    match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{02BC}' => '\'',
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' => '"',
        c => c,
    }
}

/// Matching form of a phrase: curly quotes straightened, then lowercased.
pub fn normalize_phrase(phrase: &str) -> String {
    phrase.chars().map(fold_quote).flat_map(char::to_lowercase).collect()
}

/// Normalized text plus, for every normalized byte, the byte offset of the
/// source char it came from.
#[derive(Debug, Clone)]
pub struct NormalizedText {
    pub text: String,
    origin: Vec<usize>,
    source_len: usize,
}

impl NormalizedText {
    /// Source offset for a normalized offset; the end maps to the source end.
    pub fn source_offset(&self, normalized: usize) -> usize {
        self.origin.get(normalized).copied().unwrap_or(self.source_len)
    }
}

pub fn normalize_for_matching(text: &str) -> NormalizedText {
    let mut out = String::with_capacity(text.len());
    let mut origin = Vec::with_capacity(text.len());
    for (offset, c) in text.char_indices() {
        for lc in fold_quote(c).to_lowercase() {
            out.push(lc);
            origin.extend(std::iter::repeat_n(offset, lc.len_utf8()));
        }
    }
    NormalizedText {
        text: out,
        origin,
        source_len: text.len(),
    }
}

/// One connector occurrence, with byte offsets into the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorMatch {
    pub start: usize,
    pub end: usize,
    /// The pool phrase, verbatim.
    pub phrase: String,
    pub kind: ConnectorKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorCounts {
    pub per_phrase: BTreeMap<String, usize>,
    pub confidence_total: usize,
    pub reflection_total: usize,
    pub total: usize,
    pub positions: Vec<ConnectorMatch>,
}

impl ConnectorCounts {
    pub fn distinct(&self) -> usize {
        self.per_phrase.len()
    }
}

/// Case- and quote-insensitive exact-phrase matcher over one pool.
///
/// Scans left to right, takes the longest phrase at the leftmost position and
/// never reports overlapping matches.
#[derive(Debug, Clone)]
pub struct ConnectorMatcher {
    automaton: AhoCorasick,
    phrases: Vec<(String, ConnectorKind)>,
}

impl ConnectorMatcher {
    pub fn new(pool: &ConnectorPool) -> Self {
        let phrases: Vec<(String, ConnectorKind)> = pool
            .confidence
            .iter()
            .map(|p| (p.clone(), ConnectorKind::Confidence))
            .chain(pool.reflection.iter().map(|p| (p.clone(), ConnectorKind::Reflection)))
            .collect();
        let patterns: Vec<String> = phrases.iter().map(|(p, _)| normalize_phrase(p)).collect();
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::LeftmostLongest)
            .build(&patterns)
            .expect("connector pool compiles to an automaton");
        ConnectorMatcher { automaton, phrases }
    }

    pub fn find(&self, text: &str) -> Vec<ConnectorMatch> {
        let norm = normalize_for_matching(text);
        self.automaton
            .find_iter(&norm.text)
            .map(|m| {
                let (phrase, kind) = &self.phrases[m.pattern().as_usize()];
                ConnectorMatch {
                    start: norm.source_offset(m.start()),
                    end: norm.source_offset(m.end()),
                    phrase: phrase.clone(),
                    kind: *kind,
                }
            })
            .collect()
    }

    pub fn count(&self, text: &str) -> ConnectorCounts {
        let positions = self.find(text);
        let mut counts = ConnectorCounts::default();
        for m in &positions {
            *counts.per_phrase.entry(m.phrase.clone()).or_insert(0) += 1;
            match m.kind {
                ConnectorKind::Confidence => counts.confidence_total += 1,
                ConnectorKind::Reflection => counts.reflection_total += 1,
            }
        }
        counts.total = positions.len();
        counts.positions = positions;
        counts
    }
}

/// Counts connector occurrences of `pool` in `text`.
pub fn count_connectors(text: &str, pool: &ConnectorPool) -> ConnectorCounts {
    ConnectorMatcher::new(pool).count(text)
}
