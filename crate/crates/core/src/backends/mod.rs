//! Chat-completion and embedding backends.
//!
//! Everything in the pipeline talks to a [`ChatBackend`] and an [`Embedder`].
//! Three families implement them:
//!
//! - [`http`]: OpenAI-compatible HTTP clients with retry and bounded concurrency
//! - [`scripted`]: deterministic fixtures, pure functions of the request
//! - [`cache`]: a record/replay wrapper around any other backend

pub mod cache;
pub mod http;
pub mod scripted;

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheMode, CachedChat, CachedEmbedder, ReplayCache};
pub use http::{embed_dimension_from_env, HttpChat, HttpEmbedder, RetryPolicy};
pub use scripted::{ChatRule, ScriptFile, ScriptedChat, ScriptedEmbedder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimitExhausted { attempts: u32 },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("replay cache miss for key {key}")]
    CacheMiss { key: String },
    #[error("cache i/o: {0}")]
    Io(String),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("backend not configured: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("scripted backend: {0}")]
    Scripted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    pub max_tokens: u32,
    /// Pipeline stage label, used for usage accounting.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            messages: Vec::new(),
            temperature: 0.0,
            max_tokens: 512,
            tag: tag.into(),
        }
    }

    pub fn system(mut self, content: impl Into<String>) -> Self {
        self.messages.push(ChatMessage {
            role: Role::System,
            content: content.into(),
        });
        self
    }

    pub fn user(mut self, content: impl Into<String>) -> Self {
        self.messages.push(ChatMessage {
            role: Role::User,
            content: content.into(),
        });
        self
    }

    pub fn max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.last_user_message().is_none() {
            return Err(BackendError::InvalidRequest("no user message".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("negative temperature".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

impl EmbedRequest {
    pub fn new<I, S>(texts: I) -> Result<Self, BackendError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let texts: Vec<String> = texts.into_iter().map(Into::into).collect();
        if texts.is_empty() {
            return Err(BackendError::InvalidRequest("empty embedding batch".into()));
        }
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(BackendError::InvalidRequest("blank text in embedding batch".into()));
        }
        Ok(Self { texts })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Chat,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub kind: BackendKind,
    pub model_name: String,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

impl BackendIdentity {
    pub fn chat(model_name: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Chat,
            model_name: model_name.into(),
            endpoint: endpoint.into(),
            dimension: None,
        }
    }

    pub fn embed(model_name: impl Into<String>, endpoint: impl Into<String>, dimension: usize) -> Self {
        Self {
            kind: BackendKind::Embed,
            model_name: model_name.into(),
            endpoint: endpoint.into(),
            dimension: Some(dimension),
        }
    }

    /// Stable identifier used to invalidate derived artifacts (index caches).
    pub fn fingerprint(&self) -> String {
        format!(
            "{}@{}#{}",
            self.model_name,
            self.endpoint,
            self.dimension.unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait ChatBackend: Send + Sync {
    fn identity(&self) -> BackendIdentity;

    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn identity(&self) -> BackendIdentity;

    /// One unit-norm vector per input text, in input order.
    fn embed(&self, req: &EmbedRequest) -> Result<Vec<Vec<f64>>, BackendError>;

    fn dimension(&self) -> usize {
        self.identity().dimension.unwrap_or_default()
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn identity(&self) -> BackendIdentity {
        (**self).identity()
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError> {
        (**self).complete(req)
    }
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn identity(&self) -> BackendIdentity {
        (**self).identity()
    }

    fn embed(&self, req: &EmbedRequest) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(req)
    }
}

/// Scale `v` to unit L2 norm in place.
pub fn normalize(v: &mut [f64]) -> Result<(), BackendError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(BackendError::Protocol("cannot normalize a zero or non-finite vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// Every vector must share one dimension (and match `expected` when given).
pub fn check_dimensions(vectors: &[Vec<f64>], expected: Option<usize>) -> Result<usize, BackendError> {
    let Some(first) = vectors.first() else {
        return Ok(expected.unwrap_or_default());
    };
    let dim = expected.unwrap_or(first.len());
    for v in vectors {
        if v.len() != dim {
            return Err(BackendError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    Ok(dim)
}

/// Per-run usage counters keyed by request tag.
#[derive(Debug, Default)]
pub struct UsageCounters {
    inner: Mutex<BTreeMap<String, TokenUsage>>,
}

impl UsageCounters {
    pub fn record(&self, tag: &str, usage: TokenUsage) {
        let mut map = self.inner.lock().expect("usage lock poisoned");
        map.entry(tag.to_string()).or_default().add(usage);
    }

    pub fn snapshot(&self) -> BTreeMap<String, TokenUsage> {
        self.inner.lock().expect("usage lock poisoned").clone()
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cond: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.cond.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.cond.notify_one();
    }
}

/// A transport that refuses every request. Used behind replay caches so an
/// offline run can never reach the network.
#[derive(Debug, Default)]
pub struct Offline {
    attempts: std::sync::atomic::AtomicUsize,
    dimension: usize,
}

impl Offline {
    pub fn new(dimension: usize) -> Self {
        Self {
            attempts: Default::default(),
            dimension,
        }
    }

    pub fn attempts(&self) -> usize {
        self.attempts.load(std::sync::atomic::Ordering::SeqCst)
    }

    fn refuse(&self) -> BackendError {
        self.attempts.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        BackendError::Transport("offline: network access disabled".into())
    }
}

impl ChatBackend for Offline {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::chat("offline", "offline://")
    }

    fn complete(&self, _req: &ChatRequest) -> Result<Completion, BackendError> {
        Err(self.refuse())
    }
}

impl Embedder for Offline {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::embed("offline", "offline://", self.dimension)
    }

    fn embed(&self, _req: &EmbedRequest) -> Result<Vec<Vec<f64>>, BackendError> {
        Err(self.refuse())
    }
}
