//! Record every model call of a run to a JSONL cache, then replay it with
//! backends that cannot reach anything. The replayed trace is identical.
//!
//!     cargo run --example record_replay

use std::sync::Arc;

use dualpath::backends::{CacheMode, CachedChat, CachedEmbedder, Offline, ReplayCache};
use dualpath::demo::metropolis;
use dualpath::{Backends, Pipeline, Query};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("calls.jsonl");
    let scenario = metropolis();
    let query = Query::new(&scenario.question, scenario.lang.clone())?;

    let scripted = scenario.scripted();
    let cache = ReplayCache::open(&path, CacheMode::Record)?;
    let recording = Backends::new(
        Arc::new(CachedChat::new(scripted.chat.clone(), cache.clone())),
        Arc::new(CachedEmbedder::new(scripted.embedder.clone(), cache)),
    );
    let indexes = scenario.indexes(&recording);
    let recorded = Pipeline::new(recording, indexes).answer_question(&query, "q1");
    println!("recorded: {} ({} chat calls)", recorded.final_answer, scripted.chat.call_count());

    let offline = Arc::new(Offline::new(dualpath::demo::DEMO_DIMENSION));
    let cache = ReplayCache::open(&path, CacheMode::Replay)?;
    println!("cache holds {} entries", cache.len());
    let replaying = Backends::new(
        Arc::new(CachedChat::new(offline.clone(), cache.clone())),
        Arc::new(CachedEmbedder::new(offline.clone(), cache)),
    );
    let indexes = scenario.indexes(&replaying);
    let replayed = Pipeline::new(replaying, indexes).answer_question(&query, "q1");
    println!("replayed: {} ({} live attempts)", replayed.final_answer, offline.attempts());
    assert_eq!(recorded.to_json(), replayed.to_json());
    println!("traces are identical");
    Ok(())
}
