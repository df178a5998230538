use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{GenerationParams, Proposer, ProposerError, ProposerRequest, ProposerResponse, TokenUsage};

fn default_temperature() -> f64 {
    0.0
}
fn default_max_tokens() -> u32 {
    128
}
fn default_timeout() -> u64 {
    60
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_key_env() -> Option<String> {
    Some("OPENAI_API_KEY".to_string())
}
fn default_concurrency() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// First retry delay; doubles per attempt, plus up to 25% jitter.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Environment variable holding the bearer token; `null` sends none.
    #[serde(default = "default_key_env")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub requests_per_second: Option<f64>,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
}

impl RemoteChatConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteChatConfig {
            base_url: base_url.into(),
            model: model.into(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff(),
            api_key_env: default_key_env(),
            requests_per_second: None,
            max_concurrent: default_concurrency(),
        }
    }

    pub fn generation(&self) -> GenerationParams {
        GenerationParams { temperature: self.temperature, max_tokens: self.max_tokens }
    }

    fn validate(&self) -> Result<(), ProposerError> {
        let bad = |m: &str| Err(ProposerError::Config(m.to_string()));
        if self.base_url.trim().is_empty() {
            return bad("base_url is required");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be non-negative");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        if self.max_concurrent == 0 {
            return bad("max_concurrent must be at least 1");
        }
        if self.requests_per_second.is_some_and(|r| r.is_nan() || r <= 0.0) {
            return bad("requests_per_second must be positive");
        }
        Ok(())
    }
}

/// Counting semaphore capping in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Client for `POST {base_url}/chat/completions`.
pub struct RemoteChat {
    config: RemoteChatConfig,
    client: reqwest::blocking::Client,
    key: Option<String>,
    slots: Slots,
    next_start: Mutex<Instant>,
}

enum Failure {
    Retry(String),
    Fatal(ProposerError),
}

impl RemoteChat {
    pub fn new(config: RemoteChatConfig) -> Result<Self, ProposerError> {
        config.validate()?;
        let key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ProposerError::Config(format!("environment variable {var} holding the API key is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProposerError::Config(e.to_string()))?;
        let slots = Slots { free: Mutex::new(config.max_concurrent), cv: Condvar::new() };
        Ok(RemoteChat { config, client, key, slots, next_start: Mutex::new(Instant::now()) })
    }

    pub fn config(&self) -> &RemoteChatConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// JSON body sent for `request`.
    pub fn request_body(&self, request: &ProposerRequest) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": request.wire_messages(),
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        })
    }

    fn wait_for_rate_limit(&self) {
        let Some(rps) = self.config.requests_per_second else { return };
        let interval = Duration::from_secs_f64(1.0 / rps);
        let start = {
            let mut next = self.next_start.lock().expect("rate lock");
            let now = Instant::now();
            let start = (*next).max(now);
            *next = start + interval;
            start
        };
        let now = Instant::now();
        if start > now {
            std::thread::sleep(start - now);
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<(String, Option<TokenUsage>), Failure> {
        self.wait_for_rate_limit();
        let _slot = self.slots.acquire();
        let mut call = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| Failure::Retry(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| Failure::Retry(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Retry(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            let body: String = text.chars().take(300).collect();
            return Err(Failure::Fatal(ProposerError::Http { status: status.as_u16(), body }));
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            Failure::Fatal(ProposerError::Http { status: status.as_u16(), body: format!("invalid JSON: {e}") })
        })?;
        let content = value["choices"][0]["message"]["content"].as_str().unwrap_or("").to_string();
        if content.trim().is_empty() {
            return Err(Failure::Fatal(ProposerError::Empty));
        }
        let usage = value.get("usage").and_then(|u| serde_json::from_value::<TokenUsage>(u.clone()).ok());
        Ok((content, usage))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
        let jitter = rand::rng().random_range(0.0..0.25);
        Duration::from_millis(base + (base as f64 * jitter) as u64)
    }
}

impl Proposer for RemoteChat {
    fn propose(&self, request: &ProposerRequest) -> Result<ProposerResponse, ProposerError> {
        let body = self.request_body(request);
        let started = Instant::now();
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(&body) {
                Ok((text, usage)) => {
                    return Ok(ProposerResponse {
                        text,
                        usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts: attempt,
                        cached: false,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(detail)) => {
                    log::warn!("attempt {attempt} to {} failed: {detail}", self.endpoint());
                    last = detail;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(ProposerError::Transport { attempts: self.config.max_attempts, detail: last })
    }

    fn model(&self) -> String {
        self.config.model.clone()
    }
}
