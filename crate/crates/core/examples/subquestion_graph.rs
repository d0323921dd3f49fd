//! Build a sub-question graph by hand, watch a cycle get refused, then print
//! the deterministic solving order, the JSON form and Graphviz DOT.
//!
//!     cargo run --example subquestion_graph

use dualpath::{LanguageTag, NodeId, Origin, QNode, SubQuestionGraph};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let en = LanguageTag::english();
    let mut g = SubQuestionGraph::new();
    for (k, text) in [
        (1, "Who directed Metropolis?"),
        (2, "Where was <en:1> born?"),
        (3, "Which country is <en:2> in?"),
        (4, "Which river flows through <en:2>?"),
    ] {
        g.add_node(QNode::new(NodeId::indexed("en", k), en.clone(), text, Origin::English))?;
    }
    let id = |k| NodeId::indexed("en", k);
    g.add_edge(&id(1), &id(2))?;
    g.add_edge(&id(2), &id(4))?;
    g.add_edge(&id(2), &id(3))?;

    match g.add_edge(&id(4), &id(1)) {
        Err(e) => println!("refused: {e}"),
        Ok(()) => unreachable!("en:4 -> en:1 would close a cycle"),
    }

    let order: Vec<String> = g.topological_sort()?.iter().map(ToString::to_string).collect();
    println!("order: {}", order.join(" -> "));
    println!("{}", serde_json::to_string_pretty(&g.to_json())?);
    print!("{}", g.to_dot());
    Ok(())
}
