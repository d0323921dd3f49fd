//! Talk to OpenAI-compatible endpoints configured through the environment:
//! one chat completion and, if DAPT_EMBED_URL is set, one embedding batch.
//!
//!     DAPT_CHAT_KEY=... cargo run --example http_backends -- "Who directed Metropolis?"
//!
//! Credentials are read from the environment only.

use dualpath::backends::{ChatBackend, ChatRequest, EmbedRequest, Embedder, HttpChat, HttpEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let question = std::env::args().nth(1).unwrap_or_else(|| "Who directed Metropolis?".into());
    if std::env::var_os("DAPT_CHAT_KEY").is_none() && std::env::var_os("DAPT_CHAT_URL").is_none() {
        eprintln!("set DAPT_CHAT_KEY (and optionally DAPT_CHAT_URL, DAPT_CHAT_MODEL) to run this example");
        return Ok(());
    }

    let chat = HttpChat::from_env();
    let reply = chat.complete(
        &ChatRequest::new("answer")
            .system("Answer with a short span only.")
            .user(&question)
            .max_tokens(32),
    )?;
    println!("{} -> {}", chat.identity().model_name, reply.text);
    println!(
        "tokens: {} prompt, {} completion; retries: {}",
        reply.usage.prompt_tokens,
        reply.usage.completion_tokens,
        chat.retries()
    );

    if std::env::var_os("DAPT_EMBED_URL").is_some() {
        let embedder = HttpEmbedder::from_env()?;
        let vectors = embedder.embed(&EmbedRequest::new([question.as_str(), "Fritz Lang"])?)?;
        let cos: f64 = vectors[0].iter().zip(&vectors[1]).map(|(a, b)| a * b).sum();
        println!("embedding dim {}; cosine(question, \"Fritz Lang\") = {cos:.4}", vectors[0].len());
    }
    Ok(())
}
