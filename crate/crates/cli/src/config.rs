use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Values read from `--config`. Every field is optional; a flag given on the
/// command line wins over the file, and the file wins over built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub pool: Option<String>,
    pub tokenizer: Option<String>,
    #[serde(default)]
    pub dedup: DedupSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub gate: GateSection,
    #[serde(default)]
    pub analytics: AnalyticsSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupSection {
    pub threshold: Option<f64>,
    pub case_sensitive: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub mode: Option<String>,
    pub backend: Option<String>,
    pub fixtures: Option<PathBuf>,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
    pub timeout_secs: Option<f64>,
    pub max_retries: Option<u32>,
    pub parallelism: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub requests_per_second: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub min_chars: Option<usize>,
    pub max_chars: Option<usize>,
    pub retain_refusals: Option<bool>,
    pub final_answer_in_thinking_is_leak: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsSection {
    pub window: Option<usize>,
    pub bin_width: Option<f64>,
    pub bin_start: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub mode: Option<String>,
    pub k: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// `flag` if given, else `file`, else `default`.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
