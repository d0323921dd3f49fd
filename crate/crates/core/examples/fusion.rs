//! Fuse a German and an English plan of the same question. Pass a threshold
//! to see how it changes the merges:
//!
//!     cargo run --example fusion -- 0.5

use dualpath::backends::ScriptedEmbedder;
use dualpath::fusion::{similarity_matrix, FusionConfig};
use dualpath::planning::DecompositionOutput;
use dualpath::{fuse, LanguageTag, Origin};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tau: f64 = match std::env::args().nth(1) {
        Some(t) => t.parse()?,
        None => dualpath::fusion::DEFAULT_TAU,
    };
    let de = LanguageTag::new("de")?;
    let en = LanguageTag::english();
    let source = DecompositionOutput::parse(
        r#"{"sub_questions": ["Wer führte Regie bei Metropolis?", "Wo wurde <1> geboren?", "Welcher Fluss fließt durch <2>?"],
            "dependencies": [[1, 2], [2, 3]]}"#,
    )?
    .to_graph("de", &de, Origin::Source, 12)?;
    let english = DecompositionOutput::parse(
        r#"{"sub_questions": ["Who directed Metropolis?", "Where was <1> born?", "Which river flows through <2>?"],
            "dependencies": [[1, 2], [2, 3]]}"#,
    )?
    .to_graph("en", &en, Origin::English, 12)?;

    // hand-picked vectors standing in for a multilingual embedding model
    let embedder = ScriptedEmbedder::new(3)
        .with_vector("Wer führte Regie bei Metropolis?", vec![1.0, 0.0, 0.0])
        .with_vector("Who directed Metropolis?", vec![0.95, 0.1, 0.0])
        .with_vector("Wo wurde <1> geboren?", vec![0.0, 1.0, 0.0])
        .with_vector("Where was <1> born?", vec![0.2, 0.7, 0.3])
        .with_vector("Welcher Fluss fließt durch <2>?", vec![0.0, 0.0, 1.0])
        .with_vector("Which river flows through <2>?", vec![0.0, 0.3, 0.9]);

    let m = similarity_matrix(&source, &english, &embedder)?;
    println!("cosine similarities:");
    for i in 0..source.len() {
        let row: Vec<String> = (0..english.len()).map(|j| format!("{:.3}", m.get(i, j))).collect();
        println!("  {}", row.join("  "));
    }

    let fused = fuse(&source, &english, FusionConfig::new(tau)?, &embedder)?;
    println!("tau = {tau}: {} merge(s)", fused.merges.len());
    for mg in &fused.merges {
        println!("  {} + {} ({:.3})", mg.source, mg.english, mg.similarity);
    }
    for id in fused.graph.topological_sort()? {
        let node = fused.graph.node(&id).unwrap();
        let texts: Vec<String> = node.texts.iter().map(|(l, t)| format!("[{l}] {t}")).collect();
        println!("{id:>5}  {}", texts.join("  |  "));
    }
    Ok(())
}
