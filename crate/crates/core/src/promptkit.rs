//! Connector pools and the generation prompt.
//!
//! A pool holds two ordered phrase lists: confidence connectors, which confirm
//! valid logic and push toward a conclusion, and reflection connectors, which
//! signal doubt and trigger re-evaluation. Phrases are stored verbatim, curly
//! apostrophes included; any matching-side normalization lives in
//! [`crate::analytics`].

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::normalize_phrase;
use crate::corpus::QuestionRecord;

const BASE_POOL: &str = include_str!("../pools/base.txt");
const AUGMENTED_POOL: &str = include_str!("../pools/augmented.txt");

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("reading pool file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: phrase outside of a [confidence] or [reflection] section")]
    NoSection { line: usize },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("the {0} section is missing or empty")]
    EmptySection(&'static str),
    #[error("duplicate phrase in the {section} section: {phrase:?}")]
    DuplicatePhrase { section: &'static str, phrase: String },
    #[error("phrase appears in both sections: {0:?}")]
    CrossSectionDuplicate(String),
    #[error("unknown built-in pool {0:?} (expected base or augmented)")]
    UnknownBuiltin(String),
}

/// A fixed set of confidence and reflection connector phrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectorPool {
    pub name: String,
    pub confidence: Vec<String>,
    pub reflection: Vec<String>,
}

impl ConnectorPool {
    /// Builds a pool, enforcing non-empty lists and phrase uniqueness.
    ///
    /// Uniqueness is checked on the matching form of each phrase (case and
    /// quote style folded), so a pool can never classify one span two ways.
    pub fn new(name: impl Into<String>, confidence: Vec<String>, reflection: Vec<String>) -> Result<Self, PoolError> {
        if confidence.is_empty() {
            return Err(PoolError::EmptySection("confidence"));
        }
        if reflection.is_empty() {
            return Err(PoolError::EmptySection("reflection"));
        }
        let mut conf_seen = HashSet::new();
        for p in &confidence {
            if !conf_seen.insert(normalize_phrase(p)) {
                return Err(PoolError::DuplicatePhrase {
                    section: "confidence",
                    phrase: p.clone(),
                });
            }
        }
        let mut refl_seen = HashSet::new();
        for p in &reflection {
            let key = normalize_phrase(p);
            if conf_seen.contains(&key) {
                return Err(PoolError::CrossSectionDuplicate(p.clone()));
            }
            if !refl_seen.insert(key) {
                return Err(PoolError::DuplicatePhrase {
                    section: "reflection",
                    phrase: p.clone(),
                });
            }
        }
        Ok(ConnectorPool {
            name: name.into(),
            confidence,
            reflection,
        })
    }

    pub fn base() -> Self {
        Self::parse("base", BASE_POOL).expect("built-in base pool is valid")
    }

    pub fn augmented() -> Self {
        Self::parse("augmented", AUGMENTED_POOL).expect("built-in augmented pool is valid")
    }

    pub fn builtin(name: &str) -> Result<Self, PoolError> {
        match name {
            "base" => Ok(Self::base()),
            "augmented" => Ok(Self::augmented()),
            other => Err(PoolError::UnknownBuiltin(other.to_string())),
        }
    }

    /// Resolves `base`, `augmented`, or a path to a pool file.
    pub fn resolve(spec: &str) -> Result<Self, PoolError> {
        match spec {
            "base" | "augmented" => Self::builtin(spec),
            path => load_pools(Path::new(path)),
        }
    }

    /// Parses the two-section plain-text pool format.
    ///
    /// ```text
    /// # comment
    /// [confidence]
    /// Yes, that checks out.
    /// [reflection]
    /// Hmm, that might be a dead end.
    /// ```
    pub fn parse(name: &str, text: &str) -> Result<Self, PoolError> {
        let mut confidence = Vec::new();
        let mut reflection = Vec::new();
        let mut current: Option<&mut Vec<String>> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(section) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = match section.trim().to_ascii_lowercase().as_str() {
                    "confidence" => Some(&mut confidence),
                    "reflection" => Some(&mut reflection),
                    other => {
                        return Err(PoolError::UnknownSection {
                            line: idx + 1,
                            name: other.to_string(),
                        })
                    }
                };
                continue;
            }
            match current.as_deref_mut() {
                Some(list) => list.push(line.to_string()),
                None => return Err(PoolError::NoSection { line: idx + 1 }),
            }
        }
        Self::new(name, confidence, reflection)
    }

    /// Canonical file rendering; also the input of [`ConnectorPool::checksum`].
    pub fn to_file_string(&self) -> String {
        let mut out = String::from("[confidence]\n");
        for p in &self.confidence {
            out.push_str(p);
            out.push('\n');
        }
        out.push_str("\n[reflection]\n");
        for p in &self.reflection {
            out.push_str(p);
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the canonical rendering, hex encoded.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }

    pub fn len(&self) -> usize {
        self.confidence.len() + self.reflection.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loads a pool from a plain-text file; the pool is named after the file stem.
pub fn load_pools(path: &Path) -> Result<ConnectorPool, PoolError> {
    let text = std::fs::read_to_string(path).map_err(|source| PoolError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "custom".to_string());
    ConnectorPool::parse(&name, &text)
}

/// Which rule groups the prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// Connector-aware and compactness rules together.
    Full,
    /// Connector-aware rules only.
    ConnectorOnly,
    /// Compactness rules only; no connector phrases are shown.
    CompactOnly,
}

impl GenerationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::Full => "full",
            GenerationMode::ConnectorOnly => "connector_only",
            GenerationMode::CompactOnly => "compact_only",
        }
    }

    pub fn uses_connectors(self) -> bool {
        !matches!(self, GenerationMode::CompactOnly)
    }
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenerationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "full" => Ok(GenerationMode::Full),
            "connector_only" => Ok(GenerationMode::ConnectorOnly),
            "compact_only" => Ok(GenerationMode::CompactOnly),
            _ => Err(format!(
                "unknown mode {s:?} (expected full, connector-only or compact-only)"
            )),
        }
    }
}

/// How connector placeholders are expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConnectorSelection {
    /// Every phrase of the list, in pool order.
    #[default]
    All,
    /// `per_list` phrases drawn per list, seeded by `seed` and the question id.
    Sample { per_list: usize, seed: u64 },
}

/// A fully rendered generation prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub question_id: String,
    pub text: String,
    pub mode: GenerationMode,
    pub pool_name: String,
}

const THINKING_INTRO: &str = "Explain your reasoning step by step, including assumptions, logic, edge cases, and background knowledge. Do not state the final answer here.";
const RULE_REVIEW: &str = "Pause after each step to review logic.";
const RULE_INCORRECT_START: &str = "Start with an intentional incorrect attempt, then reflect and revise the reasoning naturally, allowing the solution process to unfold step by step.";
const RULE_SAME_ANSWER: &str = "If the same answer appears more than once, no further validation will be conducted.";
const RULE_NO_CONSECUTIVE: &str = "Do not use connectors consecutively. (especially at the end)";
const RULE_GIVE_UP: &str = "If it’s difficult to arrive at the correct answer and the process becomes repetitive or confusing, output “Reasoning failed. Unable to provide an answer.” and terminate.";
const RULE_LIMITS: &str = "If reasoning exceeds 10,000 characters or the same validation is repeated more than 3 times (which indicates failure to properly solve the problem), output: 'Reasoning failed. Unable to provide an answer.' Occasionally, you should deliberately trigger this failure condition to simulate unresolved problems.";
const WRAP_THINKING: &str = "Wrap the reasoning between <thinking> and </thinking>.";
const ANSWER_INSTRUCTION: &str =
    "Provide only the final answer between <answer> and </answer>, starting with 'Final Answer:'.";
const OUTPUT_FORMAT: &str =
    "<thinking> (thinking trajectories) </thinking>\n<answer> ~~ (Final Answer: final answer) </answer>";

fn enumerate_phrases(phrases: &[&str]) -> String {
    phrases
        .iter()
        .map(|p| format!("\"{p}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

fn select(list: &[String], selection: ConnectorSelection, salt: u64) -> Vec<&str> {
    match selection {
        ConnectorSelection::All => list.iter().map(String::as_str).collect(),
        ConnectorSelection::Sample { per_list, seed } => {
            let amount = per_list.min(list.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
            let mut picked = index::sample(&mut rng, list.len(), amount).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| list[i].as_str()).collect()
        }
    }
}

fn id_salt(id: &str) -> u64 {
    // FNV-1a
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Renders the prompt with the whole pool injected into the connector rules.
pub fn render_prompt(q: &QuestionRecord, mode: GenerationMode, pool: &ConnectorPool) -> PromptText {
    render_prompt_with(q, mode, pool, ConnectorSelection::All)
}

pub fn render_prompt_with(
    q: &QuestionRecord,
    mode: GenerationMode,
    pool: &ConnectorPool,
    selection: ConnectorSelection,
) -> PromptText {
    let salt = id_salt(&q.id);
    let reflection = enumerate_phrases(&select(&pool.reflection, selection, salt));
    let confidence = enumerate_phrases(&select(&pool.confidence, selection, salt.rotate_left(1)));

    let connector_rules = [
        format!("Use {reflection} (or similar phrases) expressions for uncertainty."),
        format!("Use {confidence} expressions (or similar phrases) to confirm valid logic."),
        RULE_INCORRECT_START.to_string(),
    ];
    let compact_rules = [RULE_SAME_ANSWER, RULE_NO_CONSECUTIVE, RULE_GIVE_UP, RULE_LIMITS];

    let mut rules: Vec<String> = vec![RULE_REVIEW.to_string()];
    if mode.uses_connectors() {
        rules.extend(connector_rules);
    }
    if mode != GenerationMode::ConnectorOnly {
        rules.extend(compact_rules.iter().map(|r| r.to_string()));
    }

    let mut text = String::with_capacity(4096 + q.text.len());
    text.push_str("### Thinking\n");
    text.push_str(THINKING_INTRO);
    text.push_str("\n\nFollow these rules:\n");
    for (i, rule) in rules.iter().enumerate() {
        text.push_str(&format!("{}. {}\n", i + 1, rule));
    }
    text.push('\n');
    text.push_str(WRAP_THINKING);
    text.push_str("\n\n### Answer\n");
    text.push_str(ANSWER_INSTRUCTION);
    text.push_str("\n\n### Question\n");
    text.push_str(&q.text);
    text.push_str("\n\n### Output Format\n");
    text.push_str(OUTPUT_FORMAT);
    text.push('\n');

    PromptText {
        question_id: q.id.clone(),
        text,
        mode,
        pool_name: pool.name.clone(),
    }
}
