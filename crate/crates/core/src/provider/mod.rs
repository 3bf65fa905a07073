//! Text-generation backends.
//!
//! A [`Backend`] turns one rendered prompt into one completion. Transport
//! failures (rate limits, 5xx, dropped connections) are retried inside the
//! backend with exponential backoff; they are unrelated to the pipeline's
//! semantic regenerate-on-rejection loop.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::promptkit::PromptText;

#[cfg(feature = "http")]
mod http;
mod limits;
mod mock;

#[cfg(feature = "http")]
pub use http::{HttpBackend, HttpConfig, DEFAULT_API_KEY_ENV};
pub use limits::{Limiter, Permit};
pub use mock::MockBackend;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend unreachable after {attempts} attempt(s): {message}")]
    Unreachable { attempts: u32, message: String },
    #[error("transient backend failure persisted after {attempts} attempt(s): {message}")]
    Transient { attempts: u32, message: String },
    #[error("backend rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("no mock fixture for question {question_id:?}")]
    MissingFixture { question_id: String },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ProviderError {
    /// Rate limits, timeouts and connection failures.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ProviderError::Timeout { .. } | ProviderError::Unreachable { .. } | ProviderError::Transient { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            model: "gemini-2.0-flash".to_string(),
            temperature: 0.7,
            max_output_tokens: 8192,
            seed: None,
            timeout: Duration::from_secs(120),
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ProviderError::InvalidParams(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ProviderError::InvalidParams("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// A completion as returned by the backend. Empty text is not an error here.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCompletion {
    pub text: String,
    pub token_usage: Option<TokenUsage>,
    pub latency: Duration,
    pub backend: String,
    /// Transport attempts spent, starting at 1.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Health {
    pub backend: String,
    pub healthy: bool,
    pub detail: String,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Sends `prompt` as the sole user message and returns the completion verbatim.
    fn complete(&self, prompt: &PromptText, params: &GenParams) -> Result<RawCompletion, ProviderError>;

    /// Cheap reachability and credential check.
    fn probe(&self, params: &GenParams) -> Result<Health, ProviderError>;
}
