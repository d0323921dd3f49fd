//! Parse decomposition replies the way the planner does: tolerant of prose
//! and code fences, strict about structure.
//!
//!     cargo run --example decompose

use dualpath::planning::DecompositionOutput;
use dualpath::{LanguageTag, Origin};

const REPLIES: &[&str] = &[
    "Sure! Here is the plan:\n```json\n{\"sub_questions\": [\"Who founded Acme?\", \"When was <1> born?\"], \"dependencies\": [[1, 2]]}\n```",
    r#"{"sub_questions": ["Who wrote X?", "Where did <1> study?", "Who founded <2>?"]}"#,
    r#"{"sub_questions": ["A?", "B <3>?"], "dependencies": []}"#,
    r#"{"sub_questions": ["A?", "B?"], "dependencies": [[1, 2], [2, 1]]}"#,
    "I cannot answer that.",
];

fn main() {
    let en = LanguageTag::english();
    for reply in REPLIES {
        println!("reply: {}", reply.lines().next().unwrap_or_default());
        let graph = DecompositionOutput::parse(reply).and_then(|d| d.to_graph("en", &en, Origin::English, 12));
        match graph {
            Ok(g) => {
                for id in g.topological_sort().expect("validated graphs are acyclic") {
                    let deps: Vec<String> = g.predecessors(&id).unwrap().iter().map(ToString::to_string).collect();
                    println!("  {id}  {}  <- [{}]", g.node(&id).unwrap().primary_text(), deps.join(", "));
                }
            }
            Err(e) => println!("  rejected: {e}"),
        }
    }
}
