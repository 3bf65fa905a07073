use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{Backend, GenParams, Health, Limiter, ProviderError, RawCompletion, TokenUsage};
use crate::promptkit::PromptText;

pub const DEFAULT_API_KEY_ENV: &str = "FORGE_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Identifier recorded with every trace.
    pub name: String,
    /// Base of an OpenAI-style API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub api_key_env: String,
    /// Extra attempts after the first on rate limits, 5xx and connection errors.
    pub max_transport_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub max_in_flight: usize,
    pub requests_per_second: Option<f64>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            name: "openai".to_string(),
            base_url: "https://api.openai.com/v1".to_string(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            max_transport_retries: 4,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            max_in_flight: 4,
            requests_per_second: None,
        }
    }
}

/// Chat-completion client over HTTP.
#[derive(Debug)]
pub struct HttpBackend {
    cfg: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
    limiter: Limiter,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

enum Outcome {
    Done(u16, String),
    /// Carries the server's Retry-After hint, if any.
    Retry(ProviderError, Option<Duration>),
    Fail(ProviderError),
}

impl HttpBackend {
    /// Reads the API key from `cfg.api_key_env`; fails before any network call
    /// when it is unset or empty.
    pub fn from_env(cfg: HttpConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ProviderError::Auth(format!("environment variable {} is not set", cfg.api_key_env)))?;
        Ok(Self::with_api_key(cfg, key))
    }

    pub fn with_api_key(cfg: HttpConfig, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        let limiter = Limiter::new(cfg.max_in_flight, cfg.requests_per_second);
        HttpBackend {
            cfg,
            api_key: api_key.into(),
            agent,
            limiter,
        }
    }

    pub fn limiter(&self) -> &Limiter {
        &self.limiter
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.cfg
            .initial_backoff
            .saturating_mul(factor)
            .min(self.cfg.max_backoff)
    }

    fn classify(result: Result<ureq::http::Response<ureq::Body>, ureq::Error>, attempts: u32) -> Outcome {
        match result {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                let body = resp.body_mut().read_to_string().unwrap_or_default();
                match status {
                    200..=299 => Outcome::Done(status, body),
                    401 | 403 => Outcome::Fail(ProviderError::Auth(format!("status {status}: {body}"))),
                    408 | 429 | 500..=599 => Outcome::Retry(
                        ProviderError::Transient {
                            attempts,
                            message: format!("status {status}"),
                        },
                        retry_after,
                    ),
                    _ => Outcome::Fail(ProviderError::Rejected { status, body }),
                }
            }
            Err(ureq::Error::Timeout(_)) => Outcome::Retry(ProviderError::Timeout { attempts }, None),
            Err(e @ (ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::Io(_))) => {
                Outcome::Retry(
                    ProviderError::Unreachable {
                        attempts,
                        message: e.to_string(),
                    },
                    None,
                )
            }
            Err(e) => Outcome::Fail(ProviderError::Malformed(e.to_string())),
        }
    }

    /// Runs `send` under the in-flight bound, retrying transient outcomes.
    fn with_retries<F>(&self, max_retries: u32, mut send: F) -> Result<(u16, String, u32), ProviderError>
    where
        F: FnMut() -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire();
                Self::classify(send(), attempt)
            };
            match outcome {
                Outcome::Done(status, body) => return Ok((status, body, attempt)),
                Outcome::Fail(e) => return Err(e),
                Outcome::Retry(e, _) if attempt > max_retries => return Err(e),
                Outcome::Retry(e, hint) => {
                    let wait = hint.map_or(self.backoff(attempt), |h| h.min(self.cfg.max_backoff));
                    log::debug!(
                        "{}: attempt {attempt} failed ({e}), retrying in {wait:?}",
                        self.cfg.name
                    );
                    std::thread::sleep(wait);
                }
            }
        }
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn complete(&self, prompt: &PromptText, params: &GenParams) -> Result<RawCompletion, ProviderError> {
        params.validate()?;
        let mut body = json!({
            "model": params.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        let url = self.url("chat/completions");
        let auth = format!("Bearer {}", self.api_key);
        let started = Instant::now();
        let (_, text, attempt) = self.with_retries(self.cfg.max_transport_retries, || {
            self.agent
                .post(&url)
                .header("Authorization", &auth)
                .config()
                .timeout_global(Some(params.timeout))
                .build()
                .send_json(&body)
        })?;
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::Malformed("response has no choices".into()))?
            .message
            .content
            .ok_or_else(|| ProviderError::Malformed("choice has no message content".into()))?;
        Ok(RawCompletion {
            text: content,
            token_usage: parsed.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
            latency: started.elapsed(),
            backend: self.cfg.name.clone(),
            attempt,
        })
    }

    fn probe(&self, params: &GenParams) -> Result<Health, ProviderError> {
        let url = self.url("models");
        let auth = format!("Bearer {}", self.api_key);
        let (status, _, _) = self.with_retries(0, || {
            self.agent
                .get(&url)
                .header("Authorization", &auth)
                .config()
                .timeout_global(Some(params.timeout))
                .build()
                .call()
        })?;
        Ok(Health {
            backend: self.cfg.name.clone(),
            healthy: true,
            detail: format!("GET {url} -> {status}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_key_fails_before_network() {
        let cfg = HttpConfig {
            api_key_env: "FORGE_TEST_KEY_THAT_IS_NEVER_SET".into(),
            base_url: "http://192.0.2.1:9".into(),
            ..HttpConfig::default()
        };
        assert!(matches!(HttpBackend::from_env(cfg), Err(ProviderError::Auth(_))));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let b = HttpBackend::with_api_key(
            HttpConfig {
                initial_backoff: Duration::from_millis(100),
                max_backoff: Duration::from_millis(350),
                ..HttpConfig::default()
            },
            "k",
        );
        let waits: Vec<u128> = (1..=4).map(|r| b.backoff(r).as_millis()).collect();
        assert_eq!(waits, [100, 200, 350, 350]);
    }
}
