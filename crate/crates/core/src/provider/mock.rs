use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use super::{Backend, GenParams, Health, ProviderError, RawCompletion};
use crate::promptkit::PromptText;

/// Offline backend replaying canned completions keyed by question id.
///
/// A fixture directory holds `<id>.txt` for a fixed response, or
/// `<id>.1.txt`, `<id>.2.txt`, ... for a scripted sequence; the n-th call for
/// a question returns the n-th response, and the last one repeats once the
/// script runs out. When both forms exist, `<id>.txt` is what follows the
/// script.
#[derive(Debug)]
pub struct MockBackend {
    name: String,
    scripts: HashMap<String, Vec<String>>,
    calls: Mutex<HashMap<String, usize>>,
}

impl MockBackend {
    pub fn from_scripts<I, K, V>(scripts: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<V>)>,
        K: Into<String>,
        V: Into<String>,
    {
        MockBackend {
            name: "mock".to_string(),
            scripts: scripts
                .into_iter()
                .map(|(k, v)| (k.into(), v.into_iter().map(Into::into).collect()))
                .collect(),
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, ProviderError> {
        let mut numbered: HashMap<String, BTreeMap<u32, String>> = HashMap::new();
        let mut plain: HashMap<String, String> = HashMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if !path.is_file() || path.extension().is_none_or(|e| e != "txt") {
                continue;
            }
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let text = std::fs::read_to_string(&path)?;
            match stem.rsplit_once('.') {
                Some((id, n)) if n.parse::<u32>().is_ok() => {
                    numbered
                        .entry(id.to_string())
                        .or_default()
                        .insert(n.parse().unwrap(), text);
                }
                _ => {
                    plain.insert(stem, text);
                }
            }
        }
        let mut scripts: HashMap<String, Vec<String>> = numbered
            .into_iter()
            .map(|(id, seq)| (id, seq.into_values().collect()))
            .collect();
        for (id, text) in plain {
            scripts.entry(id).or_default().push(text);
        }
        Ok(MockBackend {
            name: "mock".to_string(),
            scripts,
            calls: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn calls_for(&self, question_id: &str) -> usize {
        self.calls
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(question_id)
            .copied()
            .unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).values().sum()
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &PromptText, params: &GenParams) -> Result<RawCompletion, ProviderError> {
        params.validate()?;
        let script = self
            .scripts
            .get(&prompt.question_id)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| ProviderError::MissingFixture {
                question_id: prompt.question_id.clone(),
            })?;
        let n = {
            let mut calls = self.calls.lock().unwrap_or_else(|e| e.into_inner());
            let n = calls.entry(prompt.question_id.clone()).or_insert(0);
            *n += 1;
            *n
        };
        Ok(RawCompletion {
            text: script[(n - 1).min(script.len() - 1)].clone(),
            token_usage: None,
            latency: Duration::ZERO,
            backend: self.name.clone(),
            attempt: 1,
        })
    }

    fn probe(&self, _params: &GenParams) -> Result<Health, ProviderError> {
        Ok(Health {
            backend: self.name.clone(),
            healthy: true,
            detail: format!("{} scripted questions", self.scripts.len()),
        })
    }
}
