use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dualpath::backends::{
    BackendError, BackendIdentity, CacheMode, CachedChat, CachedEmbedder, ChatBackend, ChatRequest, Completion,
    EmbedRequest, Embedder, Offline, ReplayCache, ScriptedEmbedder, TokenUsage,
};
use proptest::prelude::*;

/// Replies with the reversed prompt; counts calls.
#[derive(Default)]
struct Reverser(AtomicUsize);

impl ChatBackend for Reverser {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::chat("reverser", "test://")
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Ok(Completion {
            text: req.last_user_message().unwrap_or_default().chars().rev().collect(),
            usage: TokenUsage {
                calls: 1,
                prompt_tokens: 3,
                completion_tokens: 1,
            },
        })
    }
}

fn req(tag: &str, prompt: &str) -> ChatRequest {
    ChatRequest::new(tag).system("s").user(prompt)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_reproduces_recorded_session(prompts in prop::collection::vec(("[a-c]", "[a-z ]{1,12}"), 1..12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calls.jsonl");
        let live = Arc::new(Reverser::default());
        let recorded: Vec<String> = {
            let cache = ReplayCache::open(&path, CacheMode::Record).unwrap();
            let chat = CachedChat::new(live.clone(), cache);
            prompts.iter().map(|(t, p)| chat.complete(&req(t, p)).unwrap().text).collect()
        };
        let distinct: std::collections::BTreeSet<_> = prompts.iter().collect();
        prop_assert_eq!(live.0.load(Ordering::SeqCst), distinct.len(), "repeats are served from the cache");

        let offline = Arc::new(Offline::new(8));
        let cache = ReplayCache::open(&path, CacheMode::Replay).unwrap();
        let chat = CachedChat::new(offline.clone(), cache);
        for ((t, p), want) in prompts.iter().zip(&recorded) {
            prop_assert_eq!(&chat.complete(&req(t, p)).unwrap().text, want);
        }
        let miss = matches!(chat.complete(&req("zz", "never seen")), Err(BackendError::CacheMiss { .. }));
        prop_assert!(miss, "unrecorded request must miss");
        prop_assert_eq!(offline.attempts(), 0);
    }
}

#[test]
fn request_fields_are_part_of_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calls.jsonl");
    let cache = ReplayCache::open(&path, CacheMode::Record).unwrap();
    let live = Arc::new(Reverser::default());
    let chat = CachedChat::new(live.clone(), cache);
    chat.complete(&req("answer", "abc")).unwrap();
    chat.complete(&req("answer", "abc").max_tokens(16)).unwrap();
    chat.complete(&req("judge", "abc")).unwrap();
    assert_eq!(live.0.load(Ordering::SeqCst), 3);
}

#[test]
fn embeddings_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calls.jsonl");
    let batch = EmbedRequest::new(["alpha", "beta gamma"]).unwrap();
    let recorded = {
        let cache = ReplayCache::open(&path, CacheMode::Record).unwrap();
        CachedEmbedder::new(ScriptedEmbedder::new(24), cache).embed(&batch).unwrap()
    };
    let cache = ReplayCache::open(&path, CacheMode::Replay).unwrap();
    let replayed = CachedEmbedder::new(Offline::new(24), cache).embed(&batch).unwrap();
    assert_eq!(recorded, replayed, "floats survive the JSON round trip bit-for-bit");
}

#[test]
fn replay_requires_an_existing_cache() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ReplayCache::open(dir.path().join("missing.jsonl"), CacheMode::Replay).is_err());
}

#[test]
fn record_appends_across_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calls.jsonl");
    for prompt in ["one", "two"] {
        let cache = ReplayCache::open(&path, CacheMode::Record).unwrap();
        CachedChat::new(Reverser::default(), cache).complete(&req("answer", prompt)).unwrap();
    }
    let cache = ReplayCache::open(&path, CacheMode::Replay).unwrap();
    assert_eq!(cache.len(), 2);
}
