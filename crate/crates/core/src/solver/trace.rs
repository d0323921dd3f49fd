//! Reasoning traces: the persisted record of one question's run.
//!
//! A trace is a single JSON document. It contains no timestamps, so two runs
//! against the same scripted backends serialize to identical bytes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, BackendIdentity, ChatBackend, ChatRequest, Completion, TokenUsage};
use crate::fusion::Fusion;
use crate::planning::{Decomposition, Query};
use crate::qgraph::{LanguageTag, NodeId};

use super::Mode;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub node_id: NodeId,
    pub lang: LanguageTag,
    pub text: String,
    pub supporting_docs: Vec<String>,
}

impl CandidateAnswer {
    pub fn is_empty(&self) -> bool {
        self.text.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenAttempt {
    pub answer: String,
    pub accepted: bool,
}

/// Everything that happened while solving one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub node_id: NodeId,
    pub texts: BTreeMap<LanguageTag, String>,
    /// Query actually sent to retrieval, per language.
    pub queries: BTreeMap<LanguageTag, String>,
    pub retrieved: BTreeMap<LanguageTag, Vec<RetrievedDoc>>,
    pub candidates: Vec<CandidateAnswer>,
    /// Bilingual nodes: whether the two candidates were judged consistent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<bool>,
    /// Monolingual nodes: whether the single candidate was judged sufficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sufficient: Option<bool>,
    #[serde(default)]
    pub regen: Vec<RegenAttempt>,
    pub answer: CandidateAnswer,
    #[serde(default)]
    pub low_confidence: bool,
}

impl StepRecord {
    /// Query in the node's primary language (non-English first).
    pub fn primary_query(&self) -> &str {
        self.queries
            .iter()
            .find(|(l, _)| !l.is_english())
            .or_else(|| self.queries.iter().next())
            .map(|(_, q)| q.as_str())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub source: Decomposition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub english: Option<Decomposition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<Fusion>,
    pub sequence: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    pub query: String,
    pub lang: LanguageTag,
    pub retrieved: Vec<RetrievedDoc>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: usize,
    pub tag: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSettings {
    pub k: usize,
    pub max_regen: u32,
    pub tau: f64,
    pub max_nodes: usize,
    pub decompose_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub schema: u32,
    pub qid: String,
    pub question: Query,
    pub mode: Mode,
    pub settings: TraceSettings,
    pub prompt_versions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub english_question: Option<Query>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanRecord>,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisRecord>,
    /// English answer before back-translation (translate-Q&A mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub english_answer: Option<String>,
    pub final_answer: String,
    pub calls: Vec<CallRecord>,
    pub usage: BTreeMap<String, TokenUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReasoningTrace {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn step(&self, id: &NodeId) -> Option<&StepRecord> {
        self.steps.iter().find(|s| &s.node_id == id)
    }

    /// Retrievals issued for `lang` (all languages when `None`).
    pub fn retrieval_count(&self, lang: Option<&LanguageTag>) -> usize {
        let matches = |l: &LanguageTag| lang.is_none_or(|want| want == l);
        let steps: usize = self
            .steps
            .iter()
            .map(|s| s.retrieved.keys().filter(|l| matches(l)).count())
            .sum();
        let synth = self.synthesis.as_ref().is_some_and(|s| matches(&s.lang)) as usize;
        steps + synth
    }

    pub fn calls_tagged(&self, tag: &str) -> usize {
        self.calls.iter().filter(|c| c.tag == tag).count()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("traces serialize");
        s.push('\n');
        s
    }
}

/// `<dataset>.<lang>.<qid>.trace.json`
pub fn trace_file_name(dataset: &str, lang: &LanguageTag, qid: &str) -> String {
    let safe: String = qid
        .chars()
        .map(|c| if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{dataset}.{lang}.{safe}.trace.json")
}

pub fn write_trace(dir: &Path, dataset: &str, trace: &ReasoningTrace) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(trace_file_name(dataset, &trace.question.lang, &trace.qid));
    let mut file = std::fs::File::create(&path)?;
    file.write_all(trace.to_json().as_bytes())?;
    Ok(path)
}

/// Chat wrapper that logs every prompt and completion of one question.
pub(crate) struct Recorder<'a> {
    inner: &'a dyn ChatBackend,
    log: Mutex<(Vec<CallRecord>, BTreeMap<String, TokenUsage>)>,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(inner: &'a dyn ChatBackend) -> Self {
        Self {
            inner,
            log: Mutex::new((Vec::new(), BTreeMap::new())),
        }
    }

    pub(crate) fn take(&self) -> (Vec<CallRecord>, BTreeMap<String, TokenUsage>) {
        std::mem::take(&mut *self.log.lock().expect("recorder poisoned"))
    }
}

impl ChatBackend for Recorder<'_> {
    fn identity(&self) -> BackendIdentity {
        self.inner.identity()
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError> {
        let result = self.inner.complete(req);
        let mut log = self.log.lock().expect("recorder poisoned");
        let seq = log.0.len();
        log.0.push(CallRecord {
            seq,
            tag: req.tag.clone(),
            prompt: req.last_user_message().unwrap_or_default().to_string(),
            response: result.as_ref().ok().map(|c| c.text.clone()),
            error: result.as_ref().err().map(ToString::to_string),
        });
        if let Ok(c) = &result {
            log.1.entry(req.tag.clone()).or_default().add(c.usage);
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_sanitized() {
        let de = LanguageTag::new("de").unwrap();
        assert_eq!(trace_file_name("hotpotqa", &de, "q 1/2"), "hotpotqa.de.q_1_2.trace.json");
    }
}
