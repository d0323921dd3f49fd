use std::collections::{BTreeMap, BTreeSet};

use crate::qgraph::{LanguageTag, NodeId, QNode};
use crate::slots::{self, Slot};

/// A solved node as seen by later nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub queries: BTreeMap<LanguageTag, String>,
    pub answer: String,
}

impl Solved {
    fn question_in(&self, lang: &LanguageTag) -> &str {
        self.queries
            .get(lang)
            .or_else(|| self.queries.values().next())
            .map(String::as_str)
            .unwrap_or_default()
    }
}

/// Form the retrieval query for `node` in `lang`.
///
/// Slots are filled with their dependency's answer; a slot whose answer is
/// unknown falls back to the answer of the node solved immediately before.
/// A slot-free text with dependencies gets a
/// `Given: <question> → <answer>` suffix instead.
pub fn combine(
    node: &QNode,
    lang: &LanguageTag,
    dependencies: &BTreeSet<NodeId>,
    solved: &BTreeMap<NodeId, Solved>,
    previous: Option<&NodeId>,
) -> String {
    let Some(text) = node.text(lang) else {
        return String::new();
    };
    let prefix = node.id.prefix();
    let previous_answer = previous.and_then(|p| solved.get(p)).map(|s| s.answer.clone());
    if !slots::slots(text).is_empty() {
        return slots::substitute(text, |slot: &Slot| {
            slot.target(prefix)
                .and_then(|id| solved.get(&id))
                .map(|s| s.answer.clone())
                .or_else(|| previous_answer.clone())
        });
    }
    let givens: Vec<String> = dependencies
        .iter()
        .filter_map(|d| solved.get(d))
        .map(|s| format!("{} → {}", s.question_in(lang), s.answer))
        .collect();
    if givens.is_empty() {
        text.to_string()
    } else {
        format!("{text} Given: {}", givens.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qgraph::Origin;

    fn en() -> LanguageTag {
        LanguageTag::english()
    }

    fn node(id: &str, text: &str) -> QNode {
        QNode::new(NodeId::from(id), en(), text, Origin::English)
    }

    fn solved(q: &str, a: &str) -> Solved {
        Solved {
            queries: BTreeMap::from([(en(), q.to_string())]),
            answer: a.to_string(),
        }
    }

    #[test]
    fn fills_relative_slot() {
        let deps = BTreeSet::from([NodeId::from("en:1")]);
        let done = BTreeMap::from([(NodeId::from("en:1"), solved("Who directed F?", "Christopher Nolan"))]);
        let q = combine(&node("en:2", "When was <1> born?"), &en(), &deps, &done, Some(&"en:1".into()));
        assert_eq!(q, "When was Christopher Nolan born?");
    }

    #[test]
    fn no_dependencies_is_identity() {
        let q = combine(&node("en:1", "Who directed F?"), &en(), &BTreeSet::new(), &BTreeMap::new(), None);
        assert_eq!(q, "Who directed F?");
    }

    #[test]
    fn given_suffix_without_slots() {
        let deps = BTreeSet::from([NodeId::from("en:1")]);
        let done = BTreeMap::from([(NodeId::from("en:1"), solved("Who directed F?", "Nolan"))]);
        let q = combine(&node("en:2", "When was the director born?"), &en(), &deps, &done, None);
        assert_eq!(q, "When was the director born? Given: Who directed F? → Nolan");
    }

    #[test]
    fn missing_dependency_uses_previous_answer() {
        let done = BTreeMap::from([(NodeId::from("de:4"), solved("x", "Paris"))]);
        let q = combine(&node("en:2", "Where is <en:9>?"), &en(), &BTreeSet::new(), &done, Some(&"de:4".into()));
        assert_eq!(q, "Where is Paris?");
        // nothing to fall back on: slot stays
        let q = combine(&node("en:2", "Where is <en:9>?"), &en(), &BTreeSet::new(), &BTreeMap::new(), None);
        assert_eq!(q, "Where is <en:9>?");
    }

    #[test]
    fn qualified_slots_across_languages() {
        let mut n = node("en:3", "Where was <de:1> born and where did <en:2> study?");
        n.texts.insert(LanguageTag::new("de").unwrap(), "Wo wurde <de:1> geboren?".into());
        let done = BTreeMap::from([
            (NodeId::from("de:1"), solved("a", "Nolan")),
            (NodeId::from("en:2"), solved("b", "UCL")),
        ]);
        let q = combine(&n, &en(), &BTreeSet::new(), &done, None);
        assert_eq!(q, "Where was Nolan born and where did UCL study?");
        let q = combine(&n, &LanguageTag::new("de").unwrap(), &BTreeSet::new(), &done, None);
        assert_eq!(q, "Wo wurde Nolan geboren?");
    }
}
