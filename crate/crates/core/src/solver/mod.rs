//! Bilingual retrieval and answering over the fused plan.
//!
//! Nodes are solved in topological order. Each language of a node gets its
//! own retrieval path and candidate answer. Two candidates go through
//! judge → select, a lone candidate through a sufficiency check; failures
//! trigger bounded regeneration from the accumulated reasoning path. The
//! solved chain plus passages for the original question feed the final
//! short-span synthesis.

mod combine;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use combine::{combine, Solved};
pub use trace::{
    trace_file_name, write_trace, CallRecord, CandidateAnswer, PlanRecord, ReasoningTrace, RegenAttempt,
    RetrievedDoc, StepRecord, SynthesisRecord, TraceSettings, TRACE_SCHEMA_VERSION,
};

use crate::backends::{BackendError, ChatBackend, ChatRequest, Embedder};
use crate::fusion::{self, FusionConfig, FusionError};
use crate::planning::{Planner, PlanningConfig, PlanningError, Query};
use crate::prompts::{PromptSet, SYSTEM_PROMPT};
use crate::qgraph::{GraphError, LanguageTag, NodeId, QNode, SubQuestionGraph};
use crate::retrieval::{retrieve, CorpusIndex, IndexSet, RetrievalError};
use trace::Recorder;

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_MAX_REGEN: u32 = 2;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no corpus index for language `{0}`")]
    MissingIndex(LanguageTag),
    #[error("both candidate answers are empty")]
    BothEmpty,
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Pipeline variant: the full method or one of its ablations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    NoDecompose,
    NoFusion,
    TranslateQa,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::NoDecompose, Mode::NoFusion, Mode::TranslateQa];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoDecompose => "no_decompose",
            Mode::NoFusion => "no_fusion",
            Mode::TranslateQa => "translate_qa",
        }
    }

    /// Row label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Mode::Full => "Full pipeline",
            Mode::NoDecompose => "w/o Decomposition",
            Mode::NoFusion => "w/o Fusion",
            Mode::TranslateQa => "Translate Q&A",
        }
    }

    /// Corpus languages a run in this mode needs for a `lang` question.
    pub fn required_languages(self, lang: &LanguageTag) -> Vec<LanguageTag> {
        let en = LanguageTag::english();
        let mut langs = match self {
            Mode::Full => vec![lang.clone(), en],
            Mode::NoDecompose | Mode::NoFusion => vec![lang.clone()],
            Mode::TranslateQa => vec![en],
        };
        langs.dedup();
        langs
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(Mode::Full),
            "no_decompose" | "no_decomposition" => Ok(Mode::NoDecompose),
            "no_fusion" => Ok(Mode::NoFusion),
            "translate_qa" => Ok(Mode::TranslateQa),
            other => Err(format!(
                "unknown mode `{other}` (expected full, no_decompose, no_fusion or translate_qa)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub k: usize,
    pub max_regen: u32,
    pub mode: Mode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            max_regen: DEFAULT_MAX_REGEN,
            mode: Mode::Full,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.k == 0 {
            return Err(SolveError::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct Backends {
    pub chat: Arc<dyn ChatBackend>,
    pub embedder: Arc<dyn Embedder>,
}

impl Backends {
    pub fn new(chat: Arc<dyn ChatBackend>, embedder: Arc<dyn Embedder>) -> Self {
        Self { chat, embedder }
    }
}

/// `yes` as the first word of a reply (case-insensitive, punctuation ignored).
pub fn parse_yes(reply: &str) -> bool {
    reply
        .split_whitespace()
        .next()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .is_some_and(|w| w == "yes")
}

/// Prefer the source-language answer; fall back to English when it is empty.
pub fn select(source: &CandidateAnswer, english: &CandidateAnswer) -> Result<CandidateAnswer, SolveError> {
    if !source.is_empty() {
        Ok(source.clone())
    } else if !english.is_empty() {
        Ok(english.clone())
    } else {
        Err(SolveError::BothEmpty)
    }
}

fn format_passages(docs: &[&crate::retrieval::Document]) -> String {
    if docs.is_empty() {
        return "(none)".to_string();
    }
    docs.iter()
        .enumerate()
        .map(|(i, d)| {
            if d.title.is_empty() {
                format!("[{}] {}", i + 1, d.text)
            } else {
                format!("[{}] {}: {}", i + 1, d.title, d.text)
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn question_block(queries: &BTreeMap<LanguageTag, String>, order: &[LanguageTag]) -> String {
    order
        .iter()
        .filter_map(|l| queries.get(l).map(|q| format!("[{l}] {q}")))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Everything needed to answer questions; cheap to share across threads.
#[derive(Clone)]
pub struct Pipeline {
    pub backends: Backends,
    pub prompts: Arc<PromptSet>,
    pub indexes: IndexSet,
    pub planning: PlanningConfig,
    pub fusion: FusionConfig,
    pub solver: SolverConfig,
}

impl Pipeline {
    pub fn new(backends: Backends, indexes: IndexSet) -> Self {
        Self {
            backends,
            prompts: Arc::new(PromptSet::builtin()),
            indexes,
            planning: PlanningConfig::default(),
            fusion: FusionConfig::default(),
            solver: SolverConfig::default(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.solver.mode = mode;
        self
    }

    /// Run the configured mode. Failures are recorded in `trace.error`
    /// rather than returned, together with whatever was solved before them.
    pub fn answer_question(&self, q: &Query, qid: &str) -> ReasoningTrace {
        let recorder = Recorder::new(self.backends.chat.as_ref());
        let mut run = Run {
            pipeline: self,
            chat: &recorder,
            trace: ReasoningTrace {
                schema: TRACE_SCHEMA_VERSION,
                qid: qid.to_string(),
                question: q.clone(),
                mode: self.solver.mode,
                settings: TraceSettings {
                    k: self.solver.k,
                    max_regen: self.solver.max_regen,
                    tau: self.fusion.tau,
                    max_nodes: self.planning.max_nodes,
                    decompose_retries: self.planning.retries,
                },
                prompt_versions: self.prompts.versions(),
                english_question: None,
                plan: None,
                steps: Vec::new(),
                synthesis: None,
                english_answer: None,
                final_answer: String::new(),
                calls: Vec::new(),
                usage: BTreeMap::new(),
                error: None,
            },
        };
        if let Err(e) = run.execute() {
            log::warn!("question {qid}: {e}");
            run.trace.error = Some(e.to_string());
        }
        let (calls, usage) = recorder.take();
        run.trace.calls = calls;
        run.trace.usage = usage;
        run.trace
    }
}

/// State for one question.
struct Run<'p> {
    pipeline: &'p Pipeline,
    chat: &'p Recorder<'p>,
    trace: ReasoningTrace,
}

impl<'p> Run<'p> {
    fn planner(&self) -> Planner<'_> {
        Planner::new(self.chat, &self.pipeline.prompts, self.pipeline.planning)
    }

    fn embedder(&self) -> &dyn Embedder {
        self.pipeline.backends.embedder.as_ref()
    }

    fn cfg(&self) -> &SolverConfig {
        &self.pipeline.solver
    }

    fn index(&self, lang: &LanguageTag) -> Result<&'p CorpusIndex, SolveError> {
        self.pipeline
            .indexes
            .get(lang)
            .map(Arc::as_ref)
            .ok_or_else(|| SolveError::MissingIndex(lang.clone()))
    }

    fn ask(&self, tag: &str, prompt: String) -> Result<String, SolveError> {
        let req = ChatRequest::new(tag).system(SYSTEM_PROMPT).user(prompt);
        Ok(self.chat.complete(&req)?.text.trim().to_string())
    }

    fn execute(&mut self) -> Result<(), SolveError> {
        self.cfg().validate()?;
        let q = self.trace.question.clone();
        match self.cfg().mode {
            Mode::Full => {
                let answer = self.dual_path(&q)?;
                self.trace.final_answer = answer;
            }
            Mode::NoDecompose => self.single_shot(&q)?,
            Mode::NoFusion => self.source_only(&q)?,
            Mode::TranslateQa => {
                let en = LanguageTag::english();
                let english = self.planner().translate_query(&q, &en)?;
                self.trace.english_question = Some(english.clone());
                let answer = self.dual_path(&english)?;
                let back = self.planner().translate_text(&answer, &en, &q.lang)?;
                self.trace.english_answer = Some(answer);
                self.trace.final_answer = back;
            }
        }
        Ok(())
    }

    /// Plan → fuse → sequence → solve → synthesize.
    fn dual_path(&mut self, q: &Query) -> Result<String, SolveError> {
        let plan = self.planner().plan(q)?;
        if self.trace.english_question.is_none() {
            self.trace.english_question = Some(plan.english_query.clone());
        }
        let fused = fusion::fuse(
            &plan.source.graph,
            &plan.english.graph,
            self.pipeline.fusion,
            self.embedder(),
        )?;
        let sequence = fusion::sequence(&fused.graph)?;
        let graph = fused.graph.clone();
        self.trace.plan = Some(PlanRecord {
            source: plan.source,
            english: Some(plan.english),
            fusion: Some(fused),
            sequence: sequence.clone(),
        });
        self.solve_sequence(&graph, &sequence)?;
        self.synthesize_final(q)
    }

    /// Vanilla RAG: one retrieval, one answer.
    fn single_shot(&mut self, q: &Query) -> Result<(), SolveError> {
        let node = QNode::new(NodeId::indexed(q.lang.as_str(), 1), q.lang.clone(), q.text.clone(), crate::qgraph::Origin::Source);
        let (docs, retrieved) = self.retrieve(&q.lang, &q.text)?;
        let candidate = self.answer_path(&node, &q.lang, &q.text, &docs)?;
        self.trace.final_answer = candidate.text.clone();
        self.trace.steps.push(StepRecord {
            node_id: node.id.clone(),
            texts: node.texts.clone(),
            queries: BTreeMap::from([(q.lang.clone(), q.text.clone())]),
            retrieved: BTreeMap::from([(q.lang.clone(), retrieved)]),
            candidates: vec![candidate.clone()],
            judge: None,
            sufficient: None,
            regen: Vec::new(),
            answer: candidate,
            low_confidence: false,
        });
        Ok(())
    }

    /// Both graphs are planned, only the source graph is solved.
    fn source_only(&mut self, q: &Query) -> Result<(), SolveError> {
        let plan = self.planner().plan(q)?;
        self.trace.english_question = Some(plan.english_query.clone());
        let graph = plan.source.graph.clone();
        let sequence = graph.topological_sort()?;
        self.trace.plan = Some(PlanRecord {
            source: plan.source,
            english: Some(plan.english),
            fusion: None,
            sequence: sequence.clone(),
        });
        self.solve_sequence(&graph, &sequence)?;
        self.trace.final_answer = self.synthesize_final(q)?;
        Ok(())
    }

    fn solve_sequence(&mut self, graph: &SubQuestionGraph, sequence: &[NodeId]) -> Result<(), SolveError> {
        let mut previous: Option<NodeId> = None;
        for id in sequence {
            let node = graph.node(id).ok_or_else(|| GraphError::UnknownNode(id.clone()))?;
            let deps = graph.predecessors(id)?;
            self.solve_node(node, &deps, previous.as_ref())?;
            previous = Some(id.clone());
        }
        Ok(())
    }

    fn solved(&self) -> BTreeMap<NodeId, Solved> {
        self.trace
            .steps
            .iter()
            .map(|s| {
                (
                    s.node_id.clone(),
                    Solved {
                        queries: s.queries.clone(),
                        answer: s.answer.text.clone(),
                    },
                )
            })
            .collect()
    }

    fn retrieve(
        &self,
        lang: &LanguageTag,
        query: &str,
    ) -> Result<(Vec<&'p crate::retrieval::Document>, Vec<RetrievedDoc>), SolveError> {
        let index = self.index(lang)?;
        let hits = retrieve(index, query, self.cfg().k, self.embedder())?;
        let records = hits
            .iter()
            .map(|h| RetrievedDoc {
                id: h.doc.id.clone(),
                score: h.score,
            })
            .collect();
        Ok((hits.into_iter().map(|h| h.doc).collect(), records))
    }

    fn answer_path(
        &self,
        node: &QNode,
        lang: &LanguageTag,
        query: &str,
        docs: &[&crate::retrieval::Document],
    ) -> Result<CandidateAnswer, SolveError> {
        let context = format_passages(docs);
        let prompt = self
            .pipeline
            .prompts
            .render("answer", &[("context", &context), ("question", query)]);
        Ok(CandidateAnswer {
            node_id: node.id.clone(),
            lang: lang.clone(),
            text: self.ask("answer", prompt)?,
            supporting_docs: docs.iter().map(|d| d.id.clone()).collect(),
        })
    }

    fn judge(&self, a_source: &CandidateAnswer, a_en: &CandidateAnswer, question: &str) -> Result<bool, SolveError> {
        if a_source.text == a_en.text {
            return Ok(true);
        }
        let prompt = self.pipeline.prompts.render(
            "judge",
            &[
                ("source_lang", a_source.lang.as_str()),
                ("question", question),
                ("answer_source", &a_source.text),
                ("answer_en", &a_en.text),
            ],
        );
        Ok(parse_yes(&self.ask("judge", prompt)?))
    }

    fn sufficient(&self, answer: &str, question: &str) -> Result<bool, SolveError> {
        let prompt = self
            .pipeline
            .prompts
            .render("sufficiency", &[("question", question), ("answer", answer)]);
        Ok(parse_yes(&self.ask("sufficiency", prompt)?))
    }

    /// Regenerate from the reasoning path until an answer is judged
    /// sufficient or the budget runs out. `None` means exhausted.
    fn regen(
        &self,
        node: &QNode,
        question: &str,
        candidates: &[CandidateAnswer],
        docs: &[&crate::retrieval::Document],
        attempts: &mut Vec<RegenAttempt>,
    ) -> Result<Option<CandidateAnswer>, SolveError> {
        let path = self
            .trace
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {} → {}", i + 1, s.primary_query(), s.answer.text))
            .collect::<Vec<_>>();
        let path = if path.is_empty() { "(none)".to_string() } else { path.join("\n") };
        let context = format_passages(docs);
        let shown = candidates
            .iter()
            .map(|c| format!("[{}] {}", c.lang, c.text))
            .collect::<Vec<_>>()
            .join(" | ");
        let prompt = self.pipeline.prompts.render(
            "regen",
            &[("path", &path), ("context", &context), ("candidates", &shown), ("question", question)],
        );
        let lang = node.languages().remove(0);
        for _ in 0..self.cfg().max_regen {
            let text = self.ask("regen", prompt.clone())?;
            let accepted = !text.is_empty() && self.sufficient(&text, question)?;
            attempts.push(RegenAttempt {
                answer: text.clone(),
                accepted,
            });
            if accepted {
                return Ok(Some(CandidateAnswer {
                    node_id: node.id.clone(),
                    lang,
                    text,
                    supporting_docs: docs.iter().map(|d| d.id.clone()).collect(),
                }));
            }
        }
        Ok(None)
    }

    fn solve_node(
        &mut self,
        node: &QNode,
        deps: &BTreeSet<NodeId>,
        previous: Option<&NodeId>,
    ) -> Result<CandidateAnswer, SolveError> {
        let solved = self.solved();
        let langs = node.languages();
        let mut queries = BTreeMap::new();
        let mut retrieved = BTreeMap::new();
        let mut candidates = Vec::new();
        let mut all_docs: Vec<&crate::retrieval::Document> = Vec::new();
        for lang in &langs {
            let query = combine(node, lang, deps, &solved, previous);
            let (docs, records) = self.retrieve(lang, &query)?;
            candidates.push(self.answer_path(node, lang, &query, &docs)?);
            for d in docs {
                if !all_docs.iter().any(|seen| seen.id == d.id && seen.lang == d.lang) {
                    all_docs.push(d);
                }
            }
            queries.insert(lang.clone(), query);
            retrieved.insert(lang.clone(), records);
        }
        let question = question_block(&queries, &langs);

        let mut judge = None;
        let mut sufficient = None;
        let accepted = if candidates.len() >= 2 {
            let consistent = self.judge(&candidates[0], &candidates[1], &question)?;
            // an empty pair that "agrees" is a judge failure
            let selected = consistent.then(|| select(&candidates[0], &candidates[1]).ok()).flatten();
            judge = Some(selected.is_some());
            selected
        } else {
            let ok = !candidates[0].is_empty() && self.sufficient(&candidates[0].text, &question)?;
            sufficient = Some(ok);
            ok.then(|| candidates[0].clone())
        };

        let mut regen = Vec::new();
        let mut low_confidence = false;
        let answer = match accepted {
            Some(a) => a,
            None => match self.regen(node, &question, &candidates, &all_docs, &mut regen)? {
                Some(a) => a,
                None => {
                    low_confidence = true;
                    candidates
                        .iter()
                        .find(|c| !c.is_empty())
                        .unwrap_or(&candidates[0])
                        .clone()
                }
            },
        };

        self.trace.steps.push(StepRecord {
            node_id: node.id.clone(),
            texts: node.texts.clone(),
            queries,
            retrieved,
            candidates,
            judge,
            sufficient,
            regen,
            answer: answer.clone(),
            low_confidence,
        });
        Ok(answer)
    }

    /// Final short-span answer from the solved chain and passages retrieved
    /// for the question itself.
    fn synthesize_final(&mut self, q: &Query) -> Result<String, SolveError> {
        let (docs, retrieved) = self.retrieve(&q.lang, &q.text)?;
        let chain = self
            .trace
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {} → {}", i + 1, s.primary_query(), s.answer.text))
            .collect::<Vec<_>>()
            .join("\n");
        let context = format_passages(&docs);
        let prompt = self
            .pipeline
            .prompts
            .render("synthesize", &[("chain", &chain), ("context", &context), ("question", &q.text)]);
        let answer = self.ask("synthesize", prompt)?;
        self.trace.synthesis = Some(SynthesisRecord {
            query: q.text.clone(),
            lang: q.lang.clone(),
            retrieved,
            answer: answer.clone(),
        });
        Ok(answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(lang: &str, text: &str) -> CandidateAnswer {
        CandidateAnswer {
            node_id: NodeId::from("de:1"),
            lang: LanguageTag::new(lang).unwrap(),
            text: text.into(),
            supporting_docs: vec![],
        }
    }

    #[test]
    fn yes_parsing() {
        assert!(parse_yes("Yes, both state 1970."));
        assert!(parse_yes("  YES"));
        assert!(parse_yes("**yes**"));
        assert!(!parse_yes("no"));
        assert!(!parse_yes("The answers agree, yes"));
        assert!(!parse_yes(""));
        assert!(!parse_yes("yesterday"));
    }

    #[test]
    fn select_prefers_source() {
        assert_eq!(select(&cand("de", "1970"), &cand("en", "1970")).unwrap().lang.as_str(), "de");
        assert_eq!(select(&cand("de", ""), &cand("en", "1970")).unwrap().lang.as_str(), "en");
        assert!(matches!(select(&cand("de", " "), &cand("en", "")), Err(SolveError::BothEmpty)));
    }

    #[test]
    fn modes_parse_and_require_indexes() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("no-decompose".parse::<Mode>().unwrap(), Mode::NoDecompose);
        assert!("bogus".parse::<Mode>().is_err());
        let de = LanguageTag::new("de").unwrap();
        assert_eq!(Mode::Full.required_languages(&de).len(), 2);
        assert_eq!(Mode::Full.required_languages(&LanguageTag::english()).len(), 1);
        assert_eq!(Mode::TranslateQa.required_languages(&de), vec![LanguageTag::english()]);
    }
}
