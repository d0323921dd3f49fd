//! Translation and sub-question decomposition.
//!
//! The decomposition LLM replies with JSON
//! `{"sub_questions": [...], "dependencies": [[k, j], ...]}` (1-based) and
//! marks answer slots with `<k>`. Slots are rewritten to full node ids
//! (`<de:1>`) so they stay resolvable after fusion renames nodes. Invalid
//! replies are retried; when the budget runs out the plan degrades to a
//! single node holding the original question.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ChatBackend, ChatRequest};
use crate::prompts::{PromptSet, SYSTEM_PROMPT};
use crate::qgraph::{LanguageTag, NodeId, Origin, QNode, SubQuestionGraph};
use crate::slots;

pub const DEFAULT_MAX_NODES: usize = 12;
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error("query text is blank")]
    BlankQuery,
    #[error("translation came back empty twice")]
    EmptyTranslation,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub lang: LanguageTag,
}

impl Query {
    pub fn new(text: impl Into<String>, lang: LanguageTag) -> Result<Self, PlanningError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PlanningError::BlankQuery);
        }
        Ok(Self { text, lang })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionOutput {
    pub sub_questions: Vec<String>,
    #[serde(default)]
    pub dependencies: Vec<[usize; 2]>,
}

impl DecompositionOutput {
    /// Pull the first JSON object out of an LLM reply (tolerates code fences
    /// and surrounding prose).
    pub fn parse(reply: &str) -> Result<Self, String> {
        let start = reply.find('{').ok_or("no JSON object in reply")?;
        let end = reply.rfind('}').ok_or("no JSON object in reply")?;
        if end < start {
            return Err("no JSON object in reply".into());
        }
        serde_json::from_str(&reply[start..=end]).map_err(|e| e.to_string())
    }

    /// Build a validated graph with ids `<prefix>:<k>`.
    pub fn to_graph(&self, prefix: &str, lang: &LanguageTag, origin: Origin, max_nodes: usize) -> Result<SubQuestionGraph, String> {
        let n = self.sub_questions.len();
        if n == 0 {
            return Err("no sub-questions".into());
        }
        if n > max_nodes {
            return Err(format!("{n} sub-questions exceed the cap of {max_nodes}"));
        }
        if let Some(i) = self.sub_questions.iter().position(|q| q.trim().is_empty()) {
            return Err(format!("sub-question {} is blank", i + 1));
        }
        let in_range = |k: usize| (1..=n).contains(&k);
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &[from, to] in &self.dependencies {
            if !in_range(from) || !in_range(to) {
                return Err(format!("dependency [{from}, {to}] out of range 1..={n}"));
            }
            edges.insert((from, to));
        }
        let mut graph = SubQuestionGraph::new();
        for (i, text) in self.sub_questions.iter().enumerate() {
            let k = i + 1;
            for r in slots::relative_refs(text) {
                if !in_range(r) {
                    return Err(format!("sub-question {k} references <{r}> out of range"));
                }
                // A slot implies a dependency even if the list omits it.
                edges.insert((r, k));
            }
            let text = slots::qualify(text, prefix);
            graph
                .add_node(QNode::new(NodeId::indexed(prefix, k), lang.clone(), text.trim(), origin))
                .map_err(|e| e.to_string())?;
        }
        for (from, to) in edges {
            graph
                .add_edge(&NodeId::indexed(prefix, from), &NodeId::indexed(prefix, to))
                .map_err(|e| e.to_string())?;
        }
        Ok(graph)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningConfig {
    pub max_nodes: usize,
    /// Extra attempts after the first invalid decomposition.
    pub retries: u32,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            max_nodes: DEFAULT_MAX_NODES,
            retries: DEFAULT_RETRIES,
        }
    }
}

/// A decomposition plus how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub graph: SubQuestionGraph,
    pub attempts: u32,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub query: Query,
    pub english_query: Query,
    pub source: Decomposition,
    pub english: Decomposition,
}

pub struct Planner<'a> {
    chat: &'a dyn ChatBackend,
    prompts: &'a PromptSet,
    cfg: PlanningConfig,
}

impl<'a> Planner<'a> {
    pub fn new(chat: &'a dyn ChatBackend, prompts: &'a PromptSet, cfg: PlanningConfig) -> Self {
        Self { chat, prompts, cfg }
    }

    /// Translate `q` into `target`. Identity (no backend call) when the
    /// languages already match. A blank reply is retried once.
    pub fn translate_query(&self, q: &Query, target: &LanguageTag) -> Result<Query, PlanningError> {
        if &q.lang == target {
            return Ok(q.clone());
        }
        let text = self.translate_text(&q.text, &q.lang, target)?;
        Ok(Query {
            text,
            lang: target.clone(),
        })
    }

    pub fn translate_text(&self, text: &str, from: &LanguageTag, to: &LanguageTag) -> Result<String, PlanningError> {
        if from == to {
            return Ok(text.to_string());
        }
        let prompt = self.prompts.render(
            "translate",
            &[("source_lang", from.as_str()), ("target_lang", to.as_str()), ("text", text)],
        );
        let req = ChatRequest::new("translate").system(SYSTEM_PROMPT).user(prompt);
        for _ in 0..2 {
            let reply = self.chat.complete(&req)?.text;
            let reply = reply.trim();
            if !reply.is_empty() {
                return Ok(reply.to_string());
            }
        }
        Err(PlanningError::EmptyTranslation)
    }

    pub fn decompose(&self, q: &Query) -> Result<SubQuestionGraph, PlanningError> {
        let origin = if q.lang.is_english() { Origin::English } else { Origin::Source };
        Ok(self.decompose_with(q, q.lang.as_str(), origin)?.graph)
    }

    /// Decompose with node ids `<prefix>:<k>`.
    pub fn decompose_with(&self, q: &Query, prefix: &str, origin: Origin) -> Result<Decomposition, PlanningError> {
        let max_nodes = self.cfg.max_nodes.to_string();
        let prompt = self.prompts.render(
            "decompose",
            &[("lang", q.lang.as_str()), ("max_nodes", &max_nodes), ("question", &q.text)],
        );
        let req = ChatRequest::new("decompose")
            .system(SYSTEM_PROMPT)
            .user(prompt)
            .max_tokens(1024);
        let mut rejected = Vec::new();
        for attempt in 1..=self.cfg.retries + 1 {
            let reply = self.chat.complete(&req)?.text;
            let outcome = DecompositionOutput::parse(&reply)
                .and_then(|out| out.to_graph(prefix, &q.lang, origin, self.cfg.max_nodes));
            match outcome {
                Ok(graph) => {
                    return Ok(Decomposition {
                        graph,
                        attempts: attempt,
                        fallback: false,
                        rejected,
                    })
                }
                Err(reason) => {
                    log::debug!("decomposition attempt {attempt} rejected: {reason}");
                    rejected.push(reason);
                }
            }
        }
        let mut graph = SubQuestionGraph::new();
        graph
            .add_node(QNode::new(NodeId::indexed(prefix, 1), q.lang.clone(), q.text.trim(), origin))
            .expect("query text is non-blank");
        Ok(Decomposition {
            graph,
            attempts: self.cfg.retries + 1,
            fallback: true,
            rejected,
        })
    }

    /// Decompose the query and its English translation into two graphs
    /// with disjoint ids.
    pub fn plan(&self, q: &Query) -> Result<Plan, PlanningError> {
        let english_query = self.translate_query(q, &LanguageTag::english())?;
        let source_origin = if q.lang.is_english() { Origin::English } else { Origin::Source };
        let source = self.decompose_with(q, q.lang.as_str(), source_origin)?;
        let english_prefix = if q.lang.is_english() { "en.t" } else { "en" };
        let english = self.decompose_with(&english_query, english_prefix, Origin::English)?;
        Ok(Plan {
            query: q.clone(),
            english_query,
            source,
            english,
        })
    }
}
