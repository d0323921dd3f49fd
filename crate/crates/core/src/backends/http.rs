//! OpenAI-compatible HTTP clients.
//!
//! Credentials and endpoints come from the environment only:
//! `DAPT_CHAT_URL`, `DAPT_CHAT_MODEL`, `DAPT_CHAT_KEY` for chat and
//! `DAPT_EMBED_URL`, `DAPT_EMBED_MODEL`, `DAPT_EMBED_KEY` for embeddings
//! (plus the optional `DAPT_EMBED_DIM`, default 1024).

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    check_dimensions, normalize, BackendError, BackendIdentity, ChatBackend, ChatRequest, Completion,
    EmbedRequest, Embedder, Semaphore, TokenUsage, UsageCounters,
};

pub const DEFAULT_CHAT_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_CHAT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_EMBED_MODEL: &str = "bge-m3";
pub const DEFAULT_EMBED_DIM: usize = 1024;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// JSON-over-HTTP transport shared by both clients.
struct Transport {
    agent: ureq::Agent,
    url: String,
    key: Option<String>,
    retry: RetryPolicy,
    limiter: Semaphore,
    retries: AtomicU64,
}

enum Outcome {
    Done(Value),
    Retry(BackendError),
    Fatal(BackendError),
}

impl Transport {
    fn new(url: String, key: Option<String>, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            agent,
            url,
            key,
            retry: RetryPolicy::default(),
            limiter: Semaphore::new(max_in_flight),
            retries: AtomicU64::new(0),
        }
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let _permit = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match self.attempt(body) {
                Outcome::Done(v) => return Ok(v),
                Outcome::Fatal(e) => return Err(e),
                Outcome::Retry(e) => e,
            };
            if attempt >= self.retry.max_attempts {
                return Err(match err {
                    BackendError::RateLimitExhausted { .. } => {
                        BackendError::RateLimitExhausted { attempts: attempt }
                    }
                    other => other,
                });
            }
            log::warn!("{}: attempt {attempt} failed ({err}), retrying", self.url);
            self.retries.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(self.retry.delay(attempt));
        }
    }

    fn attempt(&self, body: &Value) -> Outcome {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Outcome::Retry(BackendError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => match resp.body_mut().read_json::<Value>() {
                Ok(v) => Outcome::Done(v),
                Err(e) => Outcome::Fatal(BackendError::Protocol(e.to_string())),
            },
            401 | 403 => Outcome::Fatal(BackendError::Auth(format!("HTTP {status}"))),
            429 => Outcome::Retry(BackendError::RateLimitExhausted { attempts: 0 }),
            500..=599 => Outcome::Retry(BackendError::Transport(format!("HTTP {status}"))),
            _ => {
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                Outcome::Fatal(BackendError::Transport(format!("HTTP {status}: {text}")))
            }
        }
    }
}

fn endpoint(base: &str, path: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(path) {
        base.to_string()
    } else {
        format!("{base}{path}")
    }
}

/// `DAPT_EMBED_DIM`, or the default when unset.
pub fn embed_dimension_from_env() -> Result<usize, BackendError> {
    match env_nonempty("DAPT_EMBED_DIM") {
        Some(d) => d
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| BackendError::Config(format!("DAPT_EMBED_DIM `{d}` is not a positive count"))),
        None => Ok(DEFAULT_EMBED_DIM),
    }
}

fn env_nonempty(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

pub struct HttpChat {
    model: String,
    transport: Transport,
    usage: UsageCounters,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpChat {
    pub fn new(base_url: &str, model: impl Into<String>, key: Option<String>) -> Self {
        Self {
            model: model.into(),
            transport: Transport::new(endpoint(base_url, "/chat/completions"), key, DEFAULT_MAX_IN_FLIGHT),
            usage: UsageCounters::default(),
        }
    }

    pub fn from_env() -> Self {
        let url = env_nonempty("DAPT_CHAT_URL").unwrap_or_else(|| DEFAULT_CHAT_URL.to_string());
        let model = env_nonempty("DAPT_CHAT_MODEL").unwrap_or_else(|| DEFAULT_CHAT_MODEL.to_string());
        Self::new(&url, model, env_nonempty("DAPT_CHAT_KEY"))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.transport.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.transport.limiter = Semaphore::new(n);
        self
    }

    /// Number of retried attempts so far.
    pub fn retries(&self) -> u64 {
        self.transport.retries.load(Ordering::SeqCst)
    }

    pub fn usage(&self) -> std::collections::BTreeMap<String, TokenUsage> {
        self.usage.snapshot()
    }
}

impl ChatBackend for HttpChat {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::chat(&self.model, &self.transport.url)
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let body = json!({
            "model": self.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let value = self.transport.post(&body)?;
        let resp: ChatResponse =
            serde_json::from_value(value).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(BackendError::EmptyResponse)?;
        let usage = TokenUsage {
            calls: 1,
            prompt_tokens: resp.usage.as_ref().map_or(0, |u| u.prompt_tokens),
            completion_tokens: resp.usage.as_ref().map_or(0, |u| u.completion_tokens),
        };
        self.usage.record(&req.tag, usage);
        Ok(Completion { text, usage })
    }
}

pub struct HttpEmbedder {
    model: String,
    dimension: usize,
    transport: Transport,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: impl Into<String>, key: Option<String>, dimension: usize) -> Self {
        Self {
            model: model.into(),
            dimension,
            transport: Transport::new(endpoint(base_url, "/embeddings"), key, DEFAULT_MAX_IN_FLIGHT),
        }
    }

    pub fn from_env() -> Result<Self, BackendError> {
        let url = env_nonempty("DAPT_EMBED_URL")
            .ok_or_else(|| BackendError::Config("DAPT_EMBED_URL is not set".into()))?;
        let model = env_nonempty("DAPT_EMBED_MODEL").unwrap_or_else(|| DEFAULT_EMBED_MODEL.to_string());
        Ok(Self::new(&url, model, env_nonempty("DAPT_EMBED_KEY"), embed_dimension_from_env()?))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.transport.retry = retry;
        self
    }

    pub fn retries(&self) -> u64 {
        self.transport.retries.load(Ordering::SeqCst)
    }
}

impl Embedder for HttpEmbedder {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::embed(&self.model, &self.transport.url, self.dimension)
    }

    fn embed(&self, req: &EmbedRequest) -> Result<Vec<Vec<f64>>, BackendError> {
        let body = json!({ "model": self.model, "input": req.texts });
        let value = self.transport.post(&body)?;
        let resp: EmbedResponse =
            serde_json::from_value(value).map_err(|e| BackendError::Protocol(e.to_string()))?;
        if resp.data.len() != req.texts.len() {
            return Err(BackendError::Protocol(format!(
                "{} embeddings for {} inputs",
                resp.data.len(),
                req.texts.len()
            )));
        }
        let mut items: Vec<(usize, Vec<f64>)> = resp
            .data
            .into_iter()
            .enumerate()
            .map(|(pos, item)| (item.index.unwrap_or(pos), item.embedding))
            .collect();
        items.sort_by_key(|(i, _)| *i);
        let mut vectors: Vec<Vec<f64>> = items.into_iter().map(|(_, v)| v).collect();
        check_dimensions(&vectors, None)?;
        check_dimensions(&vectors, Some(self.dimension))?;
        for v in &mut vectors {
            normalize(v)?;
        }
        Ok(vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_paths() {
        assert_eq!(
            endpoint("http://x/v1/", "/chat/completions"),
            "http://x/v1/chat/completions"
        );
        assert_eq!(endpoint("http://x/v1/embeddings", "/embeddings"), "http://x/v1/embeddings");
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(10),
        };
        assert_eq!(p.delay(1), Duration::from_millis(10));
        assert_eq!(p.delay(2), Duration::from_millis(20));
    }
}
