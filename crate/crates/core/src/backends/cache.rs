//! Record/replay cache for backend calls.
//!
//! The cache file is a JSONL append-log of `{key, request, response}`
//! records. The key is the SHA-256 of the canonical JSON encoding of the
//! full request (stage tag, temperature and token budget included).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{BackendError, BackendIdentity, ChatBackend, ChatRequest, Completion, EmbedRequest, Embedder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Misses go to the inner backend and are appended to the log.
    Record,
    /// Misses are errors; the inner backend is never called.
    Replay,
}

#[derive(Serialize)]
struct KeyMaterial<'a, T: Serialize> {
    kind: &'a str,
    request: &'a T,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    request: Value,
    response: Value,
}

struct State {
    entries: HashMap<String, Value>,
    log: Option<File>,
}

/// Entry holding the recording embedder's identity, so replayed runs can
/// reuse index caches built from the same vectors.
const EMBEDDER_IDENTITY_KEY: &str = "identity:embed";

pub struct ReplayCache {
    path: PathBuf,
    mode: CacheMode,
    state: Mutex<State>,
}

pub fn cache_key<T: Serialize>(kind: &str, request: &T) -> String {
    let bytes = serde_json::to_vec(&KeyMaterial { kind, request }).expect("requests serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BackendError {
    BackendError::Io(format!("{}: {e}", path.display()))
}

impl ReplayCache {
    pub fn open(path: impl Into<PathBuf>, mode: CacheMode) -> Result<Arc<Self>, BackendError> {
        let path = path.into();
        let mut entries = HashMap::new();
        match File::open(&path) {
            Ok(file) => {
                for (n, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|e| io_err(&path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: Entry = serde_json::from_str(&line)
                        .map_err(|e| io_err(&path, format!("line {}: {e}", n + 1)))?;
                    entries.insert(entry.key, entry.response);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && mode == CacheMode::Record => {}
            Err(e) => return Err(io_err(&path, e)),
        }
        let log = match mode {
            CacheMode::Record => Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| io_err(&path, e))?,
            ),
            CacheMode::Replay => None,
        };
        Ok(Arc::new(Self {
            path,
            mode,
            state: Mutex::new(State { entries, log }),
        }))
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("cache poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fetch<Req, Resp>(
        &self,
        kind: &str,
        request: &Req,
        call: impl FnOnce() -> Result<Resp, BackendError>,
    ) -> Result<Resp, BackendError>
    where
        Req: Serialize,
        Resp: Serialize + for<'de> Deserialize<'de>,
    {
        let key = cache_key(kind, request);
        if let Some(hit) = self.state.lock().expect("cache poisoned").entries.get(&key) {
            return serde_json::from_value(hit.clone()).map_err(|e| io_err(&self.path, e));
        }
        if self.mode == CacheMode::Replay {
            return Err(BackendError::CacheMiss { key });
        }
        let response = call()?;
        self.store(Entry {
            key,
            request: serde_json::to_value(KeyMaterial { kind, request }).expect("requests serialize"),
            response: serde_json::to_value(&response).expect("responses serialize"),
        })?;
        Ok(response)
    }

    fn store(&self, entry: Entry) -> Result<(), BackendError> {
        let mut state = self.state.lock().expect("cache poisoned");
        if let Some(log) = state.log.as_mut() {
            let mut line = serde_json::to_string(&entry).expect("entries serialize");
            line.push('\n');
            log.write_all(line.as_bytes())
                .and_then(|_| log.flush())
                .map_err(|e| io_err(&self.path, e))?;
        }
        state.entries.insert(entry.key, entry.response);
        Ok(())
    }

    /// Identity of the embedder whose vectors were recorded, if any.
    pub fn recorded_embedder(&self) -> Option<BackendIdentity> {
        let state = self.state.lock().expect("cache poisoned");
        state
            .entries
            .get(EMBEDDER_IDENTITY_KEY)
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }

    fn remember_embedder(&self, identity: &BackendIdentity) -> Result<(), BackendError> {
        if self.recorded_embedder().as_ref() == Some(identity) {
            return Ok(());
        }
        self.store(Entry {
            key: EMBEDDER_IDENTITY_KEY.to_string(),
            request: serde_json::json!({ "kind": "identity" }),
            response: serde_json::to_value(identity).expect("identities serialize"),
        })
    }
}

pub struct CachedChat<B> {
    inner: B,
    cache: Arc<ReplayCache>,
}

impl<B: ChatBackend> CachedChat<B> {
    pub fn new(inner: B, cache: Arc<ReplayCache>) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for CachedChat<B> {
    fn identity(&self) -> BackendIdentity {
        self.inner.identity()
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError> {
        self.cache.fetch("chat", req, || self.inner.complete(req))
    }
}

pub struct CachedEmbedder<E> {
    inner: E,
    cache: Arc<ReplayCache>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E, cache: Arc<ReplayCache>) -> Self {
        if cache.mode() == CacheMode::Record {
            if let Err(e) = cache.remember_embedder(&inner.identity()) {
                log::warn!("could not record embedder identity: {e}");
            }
        }
        Self { inner, cache }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    /// When replaying, the embedder that produced the recorded vectors.
    fn identity(&self) -> BackendIdentity {
        match self.cache.mode() {
            CacheMode::Replay => self.cache.recorded_embedder().unwrap_or_else(|| self.inner.identity()),
            CacheMode::Record => self.inner.identity(),
        }
    }

    fn embed(&self, req: &EmbedRequest) -> Result<Vec<Vec<f64>>, BackendError> {
        self.cache.fetch("embed", req, || self.inner.embed(req))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ScriptedChat, ScriptedEmbedder};

    #[test]
    fn key_covers_every_field() {
        let a = ChatRequest::new("answer").user("q");
        let mut b = a.clone();
        b.temperature = 0.7;
        let mut c = a.clone();
        c.tag = "judge".into();
        assert_ne!(cache_key("chat", &a), cache_key("chat", &b));
        assert_ne!(cache_key("chat", &a), cache_key("chat", &c));
        assert_ne!(cache_key("chat", &a), cache_key("embed", &a));
        assert_eq!(cache_key("chat", &a), cache_key("chat", &a.clone()));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let req = ChatRequest::new("answer").user("capital of France?");
        let recorded = {
            let cache = ReplayCache::open(&path, CacheMode::Record).unwrap();
            let chat = CachedChat::new(ScriptedChat::new(vec![]).with_default("Paris"), cache);
            let r = chat.complete(&req).unwrap();
            // second call is served from memory
            chat.complete(&req).unwrap();
            assert_eq!(chat.inner().call_count(), 1);
            r
        };
        let cache = ReplayCache::open(&path, CacheMode::Replay).unwrap();
        let chat = CachedChat::new(ScriptedChat::new(vec![]), cache.clone());
        assert_eq!(chat.complete(&req).unwrap(), recorded);
        assert_eq!(chat.inner().call_count(), 0);

        let unseen = ChatRequest::new("answer").user("something else");
        assert!(matches!(chat.complete(&unseen), Err(BackendError::CacheMiss { .. })));
    }

    #[test]
    fn embeddings_replay_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let req = EmbedRequest::new(["alpha beta", "gamma"]).unwrap();
        let first = {
            let cache = ReplayCache::open(&path, CacheMode::Record).unwrap();
            CachedEmbedder::new(ScriptedEmbedder::new(16), cache).embed(&req).unwrap()
        };
        let cache = ReplayCache::open(&path, CacheMode::Replay).unwrap();
        let replayed = CachedEmbedder::new(ScriptedEmbedder::new(16), cache).embed(&req).unwrap();
        assert_eq!(first, replayed);
    }

    #[test]
    fn replay_reports_the_recording_embedder() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let recorder = ScriptedEmbedder::new(16);
        drop(CachedEmbedder::new(ScriptedEmbedder::new(16), ReplayCache::open(&path, CacheMode::Record).unwrap()));
        let cache = ReplayCache::open(&path, CacheMode::Replay).unwrap();
        let replay = CachedEmbedder::new(super::super::Offline::new(16), cache);
        assert_eq!(replay.identity(), recorder.identity());
        assert_eq!(replay.dimension(), 16);
    }

    #[test]
    fn replay_requires_existing_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ReplayCache::open(dir.path().join("nope.jsonl"), CacheMode::Replay),
            Err(BackendError::Io(_))
        ));
    }
}
