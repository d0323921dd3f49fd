//! Bilingual sub-question planning and dual-path retrieval for multilingual
//! multi-hop question answering.
//!
//! A question is translated to English, both versions are decomposed into
//! sub-question DAGs ([`planning`]), equivalent nodes are merged across the
//! two graphs ([`fusion`]), and the fused graph is solved node by node with
//! retrieval in both languages ([`retrieval`], [`solver`]). [`eval`] scores
//! answers with EM/F1 and runs benchmarks; [`cli`] wires it all to the
//! `dualpath` binary.

pub mod backends;
pub mod cli;
pub mod config;
pub mod demo;
pub mod eval;
pub mod fusion;
pub mod planning;
pub mod prompts;
pub mod qgraph;
pub mod retrieval;
pub mod slots;
pub mod solver;

pub use backends::{BackendError, ChatBackend, Embedder};
pub use config::RunConfig;
pub use eval::{em_score, f1_score, normalize_answer, run_benchmark, BenchmarkItem, EvalRecord, Report};
pub use fusion::{fuse, Fusion, FusionConfig};
pub use planning::{Planner, Query};
pub use qgraph::{GraphError, LanguageTag, NodeId, Origin, QNode, SubQuestionGraph};
pub use retrieval::{CorpusIndex, Document};
pub use solver::{Backends, Mode, Pipeline, ReasoningTrace, SolverConfig};
