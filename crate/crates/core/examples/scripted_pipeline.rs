//! Answer the bundled German question end to end with scripted backends and
//! walk through the reasoning trace: the two plans, the fused node, the
//! judge's verdict and the regeneration it triggered.
//!
//!     cargo run --example scripted_pipeline [-- trace.json]

use dualpath::demo::metropolis;
use dualpath::Query;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = metropolis();
    let (pipeline, _) = scenario.pipeline();
    let query = Query::new(&scenario.question, scenario.lang.clone())?;
    let trace = pipeline.answer_question(&query, "q1");
    if let Some(e) = &trace.error {
        return Err(e.clone().into());
    }

    println!("Q [{}] {}", query.lang, query.text);
    if let Some(en) = &trace.english_question {
        println!("Q [en] {}", en.text);
    }
    let plan = trace.plan.as_ref().expect("full mode records a plan");
    if let Some(fusion) = &plan.fusion {
        for mg in &fusion.merges {
            println!("fused {} + {} at {:.2}", mg.source, mg.english, mg.similarity);
        }
    }
    for step in &trace.steps {
        println!("\n{}  {}", step.node_id, step.primary_query());
        for c in &step.candidates {
            println!("    candidate [{}] {}", c.lang, c.text);
        }
        if step.candidates.len() > 1 {
            println!("    consistent: {:?}", step.judge);
        }
        for r in &step.regen {
            println!("    regenerated: {} (accepted: {})", r.answer, r.accepted);
        }
        println!("    -> {}{}", step.answer.text, if step.low_confidence { " (low confidence)" } else { "" });
    }
    println!("\nanswer: {}", trace.final_answer);

    let calls: Vec<String> = trace.usage.iter().map(|(tag, u)| format!("{tag}={}", u.calls)).collect();
    println!("model calls: {}", calls.join(" "));
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, trace.to_json())?;
        println!("trace written to {path}");
    }
    Ok(())
}
