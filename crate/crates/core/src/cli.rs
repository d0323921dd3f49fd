//! The `index`, `ask` and `bench` commands.
//!
//! Commands return an exit status instead of exiting so they can be driven
//! from tests: 0 on success, 1 when the pipeline or an output write fails,
//! 2 for bad input (usage, missing files, empty benchmarks, missing
//! indexes). Only answers and report rows go to `out`; everything else goes
//! to `err`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::backends::{
    embed_dimension_from_env, CacheMode, CachedChat, CachedEmbedder, ChatBackend, Embedder, HttpChat, HttpEmbedder,
    Offline, ReplayCache, ScriptFile,
};
use crate::config::RunConfig;
use crate::eval::{format_table, load_benchmark, run_benchmark, Report};
use crate::fusion::FusionConfig;
use crate::planning::Query;
use crate::prompts::PromptSet;
use crate::qgraph::LanguageTag;
use crate::retrieval::{corpus_path, load_or_build, IndexSet};
use crate::solver::{write_trace, Backends, Mode, Pipeline, SolveError, SolverConfig};

#[derive(Debug, Parser)]
#[command(name = "dualpath", version, about = "Bilingual multi-hop question answering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a JSONL corpus and cache its index next to it.
    Index {
        corpus: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Answer one question and write its trace.
    Ask {
        question: String,
        /// Identifier used in the trace file name.
        #[arg(long, default_value = "ask")]
        qid: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// Score a benchmark file, optionally sweeping several modes.
    Bench {
        benchmark: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

/// Settings shared by all commands. Each mirrors a config-file key.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fusion threshold.
    #[arg(long)]
    pub tau: Option<String>,
    /// Passages retrieved per query.
    #[arg(long)]
    pub top_k: Option<String>,
    /// full, no_decompose, no_fusion or translate_qa.
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma-separated modes for a bench sweep.
    #[arg(long)]
    pub modes: Option<String>,
    /// Question language (bench: comma-separated list).
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long)]
    pub max_regen: Option<String>,
    /// Serve every model call from this cache; never touch the network.
    #[arg(long)]
    pub replay: Option<String>,
    /// Append every model call to this cache.
    #[arg(long)]
    pub record: Option<String>,
    /// Output directory for traces and reports.
    #[arg(long)]
    pub out: Option<String>,
    /// Benchmark worker threads.
    #[arg(long)]
    pub jobs: Option<String>,
    /// Corpus name: files are `<corpus-dir>/<dataset>.<lang>.jsonl`.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub corpus_dir: Option<String>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    pub prompts: Option<String>,
    /// JSON file describing scripted (offline) chat and embedding backends.
    #[arg(long)]
    pub script: Option<String>,
    #[arg(long)]
    pub max_nodes: Option<String>,
    #[arg(long)]
    pub decompose_retries: Option<String>,
}

impl Flags {
    /// Flags that were given, as config-file `(key, value)` pairs.
    pub fn pairs(&self) -> Vec<(&'static str, &str)> {
        [
            ("tau", &self.tau),
            ("top-k", &self.top_k),
            ("mode", &self.mode),
            ("modes", &self.modes),
            ("lang", &self.lang),
            ("max-regen", &self.max_regen),
            ("replay", &self.replay),
            ("record", &self.record),
            ("out", &self.out),
            ("jobs", &self.jobs),
            ("dataset", &self.dataset),
            ("corpus-dir", &self.corpus_dir),
            ("prompts", &self.prompts),
            ("script", &self.script),
            ("max-nodes", &self.max_nodes),
            ("decompose-retries", &self.decompose_retries),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let cfg = RunConfig::resolve(self.config.as_deref(), self.pairs()).map_err(|e| CliError::Input(e.to_string()))?;
        cfg.validate_paths().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit status 2.
    Input(String),
    /// Runtime failure: exit status 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Failed(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Failed(m) => m,
        }
    }
}

/// Backends for a run: replay cache, scripted file, or HTTP from the
/// environment, optionally wrapped in a recording cache.
pub fn build_backends(cfg: &RunConfig) -> Result<Backends, CliError> {
    let input = |e: crate::backends::BackendError| CliError::Input(e.to_string());
    if let Some(path) = &cfg.replay {
        if cfg.record.is_some() {
            return Err(CliError::Input("--replay and --record are mutually exclusive".into()));
        }
        let cache = ReplayCache::open(path, CacheMode::Replay).map_err(input)?;
        let offline = Arc::new(Offline::new(embed_dimension_from_env().map_err(input)?));
        return Ok(Backends::new(
            Arc::new(CachedChat::new(offline.clone(), cache.clone())),
            Arc::new(CachedEmbedder::new(offline, cache)),
        ));
    }
    let (chat, embedder): (Arc<dyn ChatBackend>, Arc<dyn Embedder>) = match &cfg.script {
        Some(path) => {
            let script = ScriptFile::load(path).map_err(input)?;
            (Arc::new(script.chat()), Arc::new(script.embedder()))
        }
        None => (Arc::new(HttpChat::from_env()), Arc::new(HttpEmbedder::from_env().map_err(input)?)),
    };
    match &cfg.record {
        Some(path) => {
            let cache = ReplayCache::open(path, CacheMode::Record).map_err(input)?;
            Ok(Backends::new(
                Arc::new(CachedChat::new(chat, cache.clone())),
                Arc::new(CachedEmbedder::new(embedder, cache)),
            ))
        }
        None => Ok(Backends::new(chat, embedder)),
    }
}

/// `<dataset>.<lang>.jsonl` → `lang`.
fn lang_from_file_name(path: &Path) -> Option<LanguageTag> {
    let name = path.file_name()?.to_str()?.strip_suffix(".jsonl")?;
    let (_, lang) = name.rsplit_once('.')?;
    LanguageTag::new(lang).ok()
}

fn dataset_name(cfg: &RunConfig, benchmark: Option<&Path>) -> String {
    cfg.dataset
        .clone()
        .or_else(|| {
            let name = benchmark?.file_name()?.to_str()?;
            name.split('.').next().filter(|s| !s.is_empty()).map(String::from)
        })
        .unwrap_or_else(|| "corpus".to_string())
}

fn load_indexes(
    cfg: &RunConfig,
    dataset: &str,
    langs: &[LanguageTag],
    embedder: &dyn Embedder,
    indexes: &mut IndexSet,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    for lang in langs {
        if indexes.contains_key(lang) {
            continue;
        }
        let path = corpus_path(&cfg.corpus_dir, dataset, lang);
        if !path.is_file() {
            return Err(CliError::Input(format!(
                "{} (expected corpus {})",
                SolveError::MissingIndex(lang.clone()),
                path.display()
            )));
        }
        let (index, cached) = load_or_build(&path, lang, embedder).map_err(|e| CliError::Failed(e.to_string()))?;
        let _ = writeln!(
            err,
            "{}: {} docs{}",
            path.display(),
            index.len(),
            if cached { " (cached)" } else { "" }
        );
        indexes.insert(lang.clone(), Arc::new(index));
    }
    Ok(())
}

fn pipeline(cfg: &RunConfig, backends: Backends, indexes: IndexSet, mode: Mode) -> Result<Pipeline, CliError> {
    let prompts = match &cfg.prompts {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| CliError::Input(e.to_string()))?,
        None => PromptSet::builtin(),
    };
    Ok(Pipeline {
        backends,
        prompts: Arc::new(prompts),
        indexes,
        planning: cfg.planning(),
        fusion: FusionConfig::new(cfg.tau).map_err(|e| CliError::Input(e.to_string()))?,
        solver: SolverConfig {
            k: cfg.top_k,
            max_regen: cfg.max_regen,
            mode,
        },
    })
}

/// Build (or reuse) the index for one corpus file.
pub fn cmd_index(
    corpus: &Path,
    flags: &Flags,
    backends: Option<Backends>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = flags.resolve()?;
    if !corpus.is_file() {
        return Err(CliError::Input(format!("corpus not found: {}", corpus.display())));
    }
    let lang = match (&flags.lang, lang_from_file_name(corpus)) {
        (None, Some(inferred)) => inferred,
        _ => cfg.lang().clone(),
    };
    let backends = match backends {
        Some(b) => b,
        None => build_backends(&cfg)?,
    };
    let (index, cached) =
        load_or_build(corpus, &lang, backends.embedder.as_ref()).map_err(|e| CliError::Failed(e.to_string()))?;
    let _ = writeln!(
        err,
        "{}: {}",
        corpus.display(),
        if cached { "index cache hit" } else { "index built" }
    );
    writeln!(out, "indexed {} docs (dim {})", index.len(), index.dimension()).map_err(|e| CliError::Failed(e.to_string()))
}

/// Answer `question`, print the final answer and write the trace.
pub fn cmd_ask(
    question: &str,
    qid: &str,
    flags: &Flags,
    backends: Option<Backends>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = flags.resolve()?;
    if cfg.languages.len() != 1 {
        return Err(CliError::Input("ask takes exactly one --lang".into()));
    }
    let lang = cfg.lang().clone();
    let query = Query::new(question, lang.clone()).map_err(|e| CliError::Input(e.to_string()))?;
    let backends = match backends {
        Some(b) => b,
        None => build_backends(&cfg)?,
    };
    let dataset = dataset_name(&cfg, None);
    let mut indexes = IndexSet::new();
    load_indexes(
        &cfg,
        &dataset,
        &cfg.mode.required_languages(&lang),
        backends.embedder.as_ref(),
        &mut indexes,
        err,
    )?;
    let pipeline = pipeline(&cfg, backends, indexes, cfg.mode)?;
    let trace = pipeline.answer_question(&query, qid);
    let path = write_trace(&cfg.out, &dataset, &trace).map_err(|e| CliError::Failed(format!("writing trace: {e}")))?;
    let _ = writeln!(err, "trace: {}", path.display());
    if let Some(e) = &trace.error {
        return Err(CliError::Failed(format!("pipeline failed: {e}")));
    }
    writeln!(out, "{}", trace.final_answer).map_err(|e| CliError::Failed(e.to_string()))
}

/// Score a benchmark for every configured language and mode.
pub fn cmd_bench(
    benchmark: &Path,
    flags: &Flags,
    backends: Option<Backends>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Vec<Report>, CliError> {
    let cfg = flags.resolve()?;
    let items = load_benchmark(benchmark).map_err(|e| CliError::Input(e.to_string()))?;
    if items.is_empty() {
        return Err(CliError::Input(format!("benchmark is empty: {}", benchmark.display())));
    }
    let backends = match backends {
        Some(b) => b,
        None => build_backends(&cfg)?,
    };
    let dataset = dataset_name(&cfg, Some(benchmark));
    let modes = cfg.sweep();
    let mut indexes = IndexSet::new();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for lang in &cfg.languages {
        for &mode in &modes {
            load_indexes(
                &cfg,
                &dataset,
                &mode.required_languages(lang),
                backends.embedder.as_ref(),
                &mut indexes,
                err,
            )?;
            let mut dir = cfg.out.clone();
            if modes.len() > 1 {
                dir.push(mode.as_str());
            }
            if cfg.languages.len() > 1 {
                dir.push(lang.as_str());
            }
            let pipeline = pipeline(&cfg, backends.clone(), indexes.clone(), mode)?;
            let run = run_benchmark(&items, lang, &pipeline, &dataset, &dir, cfg.jobs)
                .map_err(|e| CliError::Failed(format!("writing report: {e}")))?;
            for f in &run.trace_failures {
                let _ = writeln!(err, "trace not written: {f}");
            }
            failures.extend(run.trace_failures);
            writeln!(out, "{}", run.report.row()).map_err(|e| CliError::Failed(e.to_string()))?;
            reports.push(run.report);
        }
    }
    let _ = write!(err, "{}", format_table(&reports));
    if !failures.is_empty() {
        return Err(CliError::Failed(format!("{} item(s) produced no trace", failures.len())));
    }
    Ok(reports)
}

/// Parse `args` (including the program name) and run the command. Tests
/// pass `backends` to bypass construction from flags and the environment.
pub fn run_with<I, T>(args: I, backends: Option<Backends>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Index { corpus, flags } => cmd_index(corpus, flags, backends, out, err),
        Command::Ask { question, qid, flags } => cmd_ask(question, qid, flags, backends, out, err),
        Command::Bench { benchmark, flags } => cmd_bench(benchmark, flags, backends, out, err).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, None, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
