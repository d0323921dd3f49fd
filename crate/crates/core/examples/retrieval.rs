//! Index a JSONL corpus and query it. With no arguments the demo corpus is
//! written to a temporary directory first.
//!
//!     cargo run --example retrieval -- corpus.en.jsonl "Who directed Metropolis?"
//!
//! Uses the deterministic hashed-feature embedder, so rankings reflect word
//! overlap rather than meaning; point the library at a real embedder for that.

use dualpath::backends::ScriptedEmbedder;
use dualpath::retrieval::{load_or_build, retrieve};
use dualpath::LanguageTag;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let scratch = tempfile::tempdir()?;
    let corpus = match args.next() {
        Some(path) => path.into(),
        None => {
            dualpath::demo::metropolis().write(scratch.path())?;
            scratch.path().join("metropolis.en.jsonl")
        }
    };
    let query = args.next().unwrap_or_else(|| "Where was Fritz Lang born?".into());

    let embedder = ScriptedEmbedder::new(64);
    let (index, cached) = load_or_build(&corpus, &LanguageTag::english(), &embedder)?;
    println!(
        "{}: {} docs, dim {}{}",
        corpus.display(),
        index.len(),
        index.dimension(),
        if cached { " (from cache)" } else { "" }
    );
    println!("query: {query}");
    for hit in retrieve(&index, &query, 3, &embedder)? {
        println!("{:.4}  {}  {}", hit.score, hit.doc.id, hit.doc.text);
    }
    Ok(())
}
