//! Sub-question dependency graphs.
//!
//! A [`SubQuestionGraph`] is a DAG of [`QNode`]s. An edge `(u, v)` means the
//! answer to `u` is needed to solve `v`. Every mutation keeps the graph
//! acyclic, and [`SubQuestionGraph::topological_sort`] is deterministic: ties
//! between ready nodes are broken by the smallest id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("edge {from} -> {to} would create a cycle")]
    WouldCreateCycle { from: NodeId, to: NodeId },
    #[error("self-loop on `{0}`")]
    SelfLoop(NodeId),
    #[error("graph contains a cycle")]
    CycleDetected,
    #[error("duplicate node `{0}`")]
    DuplicateNode(NodeId),
    #[error("invalid node `{id}`: {reason}")]
    InvalidNode { id: NodeId, reason: String },
    #[error("invalid language tag `{0}`")]
    InvalidLanguage(String),
}

/// ISO 639-1 style language code, always lowercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn new(code: &str) -> Result<Self, GraphError> {
        let code = code.trim();
        if code.is_empty() || code.chars().any(|c| c.is_whitespace()) {
            return Err(GraphError::InvalidLanguage(code.to_string()));
        }
        Ok(Self(code.to_lowercase()))
    }

    pub fn english() -> Self {
        Self("en".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LanguageTag {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for LanguageTag {
    type Error = GraphError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<LanguageTag> for String {
    fn from(tag: LanguageTag) -> Self {
        tag.0
    }
}

/// Node identifier, conventionally `<prefix>:<k>` with `k` the 1-based
/// position of the sub-question in the decomposition output.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn indexed(prefix: &str, k: usize) -> Self {
        Self(format!("{prefix}:{k}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The part before the last `:`, if any.
    pub fn prefix(&self) -> Option<&str> {
        self.0.rsplit_once(':').map(|(p, _)| p)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Source,
    English,
    Fused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub text: String,
    pub provenance: String,
}

/// One sub-question. Carries one text per language (two after fusion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNode {
    pub id: NodeId,
    pub texts: BTreeMap<LanguageTag, String>,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<AnswerRecord>,
}

impl QNode {
    pub fn new(id: NodeId, lang: LanguageTag, text: impl Into<String>, origin: Origin) -> Self {
        let mut texts = BTreeMap::new();
        texts.insert(lang, text.into());
        Self {
            id,
            texts,
            origin,
            answer: None,
        }
    }

    pub fn text(&self, lang: &LanguageTag) -> Option<&str> {
        self.texts.get(lang).map(String::as_str)
    }

    /// Languages of this node, non-English first, English last.
    pub fn languages(&self) -> Vec<LanguageTag> {
        let mut langs: Vec<_> = self.texts.keys().filter(|l| !l.is_english()).cloned().collect();
        if self.texts.contains_key(&LanguageTag::english()) {
            langs.push(LanguageTag::english());
        }
        langs
    }

    /// Text in the node's primary language (the non-English one if present).
    pub fn primary_text(&self) -> &str {
        let lang = &self.languages()[0];
        &self.texts[lang]
    }

    pub fn is_bilingual(&self) -> bool {
        self.texts.len() >= 2
    }

    fn validate(&self) -> Result<(), GraphError> {
        if self.texts.is_empty() {
            return Err(GraphError::InvalidNode {
                id: self.id.clone(),
                reason: "no texts".into(),
            });
        }
        if self.texts.values().any(|t| t.trim().is_empty()) {
            return Err(GraphError::InvalidNode {
                id: self.id.clone(),
                reason: "blank text".into(),
            });
        }
        Ok(())
    }
}

/// Directed acyclic graph of sub-questions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubQuestionGraph {
    nodes: BTreeMap<NodeId, QNode>,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl SubQuestionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: QNode) -> Result<(), GraphError> {
        node.validate()?;
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn add_edge(&mut self, from: &NodeId, to: &NodeId) -> Result<(), GraphError> {
        for id in [from, to] {
            if !self.nodes.contains_key(id) {
                return Err(GraphError::UnknownNode(id.clone()));
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop(from.clone()));
        }
        if self.reaches(to, from) {
            return Err(GraphError::WouldCreateCycle {
                from: from.clone(),
                to: to.clone(),
            });
        }
        self.edges.insert((from.clone(), to.clone()));
        Ok(())
    }

    /// Whether a directed path leads from `start` to `goal`.
    pub fn reaches(&self, start: &NodeId, goal: &NodeId) -> bool {
        let mut stack = vec![start];
        let mut seen = BTreeSet::new();
        while let Some(cur) = stack.pop() {
            if cur == goal {
                return true;
            }
            if !seen.insert(cur) {
                continue;
            }
            stack.extend(self.successors_iter(cur));
        }
        false
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &NodeId) -> Option<&QNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut QNode> {
        self.nodes.get_mut(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &QNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.edges.iter()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: &NodeId, to: &NodeId) -> bool {
        self.edges.contains(&(from.clone(), to.clone()))
    }

    fn successors_iter<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.edges
            .iter()
            .filter(move |(f, _)| f == id)
            .map(|(_, t)| t)
    }

    pub fn predecessors(&self, id: &NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        if !self.contains(id) {
            return Err(GraphError::UnknownNode(id.clone()));
        }
        Ok(self
            .edges
            .iter()
            .filter(|(_, t)| t == id)
            .map(|(f, _)| f.clone())
            .collect())
    }

    pub fn successors(&self, id: &NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        if !self.contains(id) {
            return Err(GraphError::UnknownNode(id.clone()));
        }
        Ok(self.successors_iter(id).cloned().collect())
    }

    /// Kahn's algorithm with an ordered frontier: among ready nodes the
    /// smallest id is always emitted first.
    pub fn topological_sort(&self) -> Result<Vec<NodeId>, GraphError> {
        let mut indegree: BTreeMap<&NodeId, usize> = self.nodes.keys().map(|id| (id, 0)).collect();
        for (_, to) in &self.edges {
            *indegree.get_mut(to).ok_or(GraphError::UnknownNode(to.clone()))? += 1;
        }
        let mut ready: BTreeSet<&NodeId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_first() {
            order.push(id.clone());
            for succ in self.successors_iter(id) {
                let d = indegree.get_mut(succ).expect("edge endpoints exist");
                *d -= 1;
                if *d == 0 {
                    ready.insert(succ);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(GraphError::CycleDetected);
        }
        Ok(order)
    }

    /// Merge `absorbed` into `keep`: redirects every edge touching
    /// `absorbed` onto `keep`, drops resulting self-loops and deletes
    /// `absorbed`. Texts are not touched. Fails with
    /// [`GraphError::WouldCreateCycle`] (leaving the graph unchanged) if the
    /// contraction closes a cycle.
    pub fn contract(&mut self, keep: &NodeId, absorbed: &NodeId) -> Result<QNode, GraphError> {
        for id in [keep, absorbed] {
            if !self.contains(id) {
                return Err(GraphError::UnknownNode(id.clone()));
            }
        }
        if keep == absorbed {
            return Err(GraphError::SelfLoop(keep.clone()));
        }
        if self.reaches_via_other(keep, absorbed) || self.reaches_via_other(absorbed, keep) {
            return Err(GraphError::WouldCreateCycle {
                from: absorbed.clone(),
                to: keep.clone(),
            });
        }
        let remap = |id: &NodeId| if id == absorbed { keep.clone() } else { id.clone() };
        self.edges = std::mem::take(&mut self.edges)
            .into_iter()
            .map(|(f, t)| (remap(&f), remap(&t)))
            .filter(|(f, t)| f != t)
            .collect();
        Ok(self.nodes.remove(absorbed).expect("checked above"))
    }

    /// Path from `a` to `b` of length at least two (through some other node).
    fn reaches_via_other(&self, a: &NodeId, b: &NodeId) -> bool {
        self.successors_iter(a)
            .filter(|s| *s != b)
            .any(|s| self.reaches(s, b))
    }

    /// Union of two graphs with disjoint node ids.
    pub fn disjoint_union(a: &Self, b: &Self) -> Result<Self, GraphError> {
        let mut out = a.clone();
        for node in b.nodes() {
            out.add_node(node.clone())?;
        }
        out.edges.extend(b.edges.iter().cloned());
        Ok(out)
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            nodes: self
                .nodes
                .values()
                .map(|n| NodeJson {
                    id: n.id.clone(),
                    texts: n.texts.clone(),
                    origin: n.origin,
                })
                .collect(),
            edges: self.edges.iter().map(|(f, t)| [f.clone(), t.clone()]).collect(),
        }
    }

    /// Graphviz rendering for debugging.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph subquestions {\n  rankdir=LR;\n");
        for node in self.nodes.values() {
            let label = node
                .texts
                .iter()
                .map(|(l, t)| format!("[{l}] {t}"))
                .collect::<Vec<_>>()
                .join("\\n");
            let shape = if node.origin == Origin::Fused { "doubleoctagon" } else { "box" };
            out.push_str(&format!(
                "  \"{}\" [shape={shape}, label=\"{}\\n{}\"];\n",
                escape_dot(node.id.as_str()),
                escape_dot(node.id.as_str()),
                escape_dot(&label).replace("\\\\n", "\\n"),
            ));
        }
        for (f, t) in &self.edges {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\";\n",
                escape_dot(f.as_str()),
                escape_dot(t.as_str())
            ));
        }
        out.push_str("}\n");
        out
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Wire form: `{nodes:[{id, texts:{lang:string}, origin}], edges:[[from,to]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<[NodeId; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: NodeId,
    pub texts: BTreeMap<LanguageTag, String>,
    pub origin: Origin,
}

impl TryFrom<GraphJson> for SubQuestionGraph {
    type Error = GraphError;

    fn try_from(json: GraphJson) -> Result<Self, Self::Error> {
        let mut graph = SubQuestionGraph::new();
        for n in json.nodes {
            graph.add_node(QNode {
                id: n.id,
                texts: n.texts,
                origin: n.origin,
                answer: None,
            })?;
        }
        for [from, to] in json.edges {
            graph.add_edge(&from, &to)?;
        }
        Ok(graph)
    }
}

impl Serialize for SubQuestionGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SubQuestionGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = GraphJson::deserialize(deserializer)?;
        SubQuestionGraph::try_from(json).map_err(serde::de::Error::custom)
    }
}
