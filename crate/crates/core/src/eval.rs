//! Answer scoring and the benchmark runner.
//!
//! Normalization follows the SQuAD recipe: lowercase, strip punctuation,
//! drop English articles, collapse whitespace. Articles are only removed for
//! English. F1 tokenizes on whitespace, except Chinese and Thai, which are
//! scored per character.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use crate::backends::TokenUsage;
use crate::planning::Query;
use crate::qgraph::LanguageTag;
use crate::solver::{write_trace, Mode, Pipeline};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("benchmark line {line}: {reason}")]
    MalformedItem { line: usize, reason: String },
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Languages scored with one token per character.
pub fn uses_char_tokens(lang: &LanguageTag) -> bool {
    matches!(lang.as_str(), "zh" | "th")
}

pub fn normalize_answer(text: &str, lang: &LanguageTag) -> String {
    let lowered: String = text.to_lowercase().chars().filter(|c| !is_punctuation(*c)).collect();
    let english = lang.is_english();
    lowered
        .split_whitespace()
        .filter(|w| !(english && matches!(*w, "a" | "an" | "the")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn tokens(normalized: &str, lang: &LanguageTag) -> Vec<String> {
    if uses_char_tokens(lang) {
        normalized
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect()
    } else {
        normalized.split_whitespace().map(String::from).collect()
    }
}

pub fn em_score(pred: &str, golds: &[String], lang: &LanguageTag) -> u8 {
    let p = normalize_answer(pred, lang);
    golds.iter().any(|g| normalize_answer(g, lang) == p) as u8
}

fn f1_single(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best token F1 over all gold aliases.
pub fn f1_score(pred: &str, golds: &[String], lang: &LanguageTag) -> f64 {
    let p = tokens(&normalize_answer(pred, lang), lang);
    golds
        .iter()
        .map(|g| f1_single(&p, &tokens(&normalize_answer(g, lang), lang)))
        .fold(0.0, f64::max)
}

/// One benchmark question, possibly in several languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub qid: String,
    pub questions: BTreeMap<LanguageTag, String>,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(default = "LanguageTag::english")]
    pub gold_lang: LanguageTag,
}

/// Read a benchmark JSONL file (`{qid, questions:{lang:str}, answers:[str]}`).
pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkItem>, EvalError> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EvalError::MalformedItem { line: i + 1, reason };
        let item: BenchmarkItem = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if item.questions.is_empty() {
            return Err(bad("no questions".into()));
        }
        if item.gold_answers.is_empty() {
            return Err(bad("no answers".into()));
        }
        items.push(item);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub qid: String,
    pub lang: LanguageTag,
    pub mode: Mode,
    pub prediction: String,
    pub gold: Vec<String>,
    pub normalized_prediction: String,
    pub normalized_gold: Vec<String>,
    pub em: u8,
    pub f1: f64,
    pub latency_ms: u64,
    pub token_usage: BTreeMap<String, TokenUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn score(item: &BenchmarkItem, lang: &LanguageTag, mode: Mode, prediction: &str) -> Self {
        Self {
            qid: item.qid.clone(),
            lang: lang.clone(),
            mode,
            prediction: prediction.to_string(),
            gold: item.gold_answers.clone(),
            normalized_prediction: normalize_answer(prediction, lang),
            normalized_gold: item.gold_answers.iter().map(|g| normalize_answer(g, lang)).collect(),
            em: em_score(prediction, &item.gold_answers, lang),
            f1: f1_score(prediction, &item.gold_answers, lang),
            latency_ms: 0,
            token_usage: BTreeMap::new(),
            error: None,
        }
    }
}

/// Aggregate scores for one (dataset, language, mode) run. `em` and `f1`
/// are means over items, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub lang: LanguageTag,
    pub mode: Mode,
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub errors: usize,
}

impl Report {
    pub fn from_records(dataset: &str, lang: &LanguageTag, mode: Mode, records: &[EvalRecord]) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&EvalRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            dataset: dataset.to_string(),
            lang: lang.clone(),
            mode,
            n,
            em: mean(&|r| r.em as f64),
            f1: mean(&|r| r.f1),
            errors: records.iter().filter(|r| r.error.is_some()).count(),
        }
    }

    /// One printable row, scores as percentages.
    pub fn row(&self) -> String {
        format!(
            "{} {} {} n={} EM {:.1} F1 {:.1} errors={}",
            self.dataset,
            self.lang,
            self.mode,
            self.n,
            self.em * 100.0,
            self.f1 * 100.0,
            self.errors
        )
    }
}

/// Mode-by-language table of EM/F1 percentages with a per-row average.
pub fn format_table(reports: &[Report]) -> String {
    let mut langs: Vec<&LanguageTag> = reports.iter().map(|r| &r.lang).collect();
    langs.sort();
    langs.dedup();
    let mut modes: Vec<Mode> = reports.iter().map(|r| r.mode).collect();
    modes.sort();
    modes.dedup();

    let mut out = format!("{:<20}", "Method");
    for l in &langs {
        out.push_str(&format!(" | {:>5} {:>5}", format!("{l} EM"), "F1"));
    }
    out.push_str(&format!(" | {:>5} {:>5}\n", "AvgEM", "F1"));
    for mode in modes {
        out.push_str(&format!("{:<20}", mode.label()));
        let mut ems = Vec::new();
        let mut f1s = Vec::new();
        for l in &langs {
            match reports.iter().find(|r| r.mode == mode && &r.lang == *l) {
                Some(r) => {
                    ems.push(r.em * 100.0);
                    f1s.push(r.f1 * 100.0);
                    out.push_str(&format!(" | {:>5.1} {:>5.1}", r.em * 100.0, r.f1 * 100.0));
                }
                None => out.push_str(&format!(" | {:>5} {:>5}", "-", "-")),
            }
        }
        let avg = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        out.push_str(&format!(" | {:>5.1} {:>5.1}\n", avg(&ems), avg(&f1s)));
    }
    out
}

/// A scored item and, if its trace could not be written, why.
type Scored = (EvalRecord, Option<String>);

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: Report,
    pub records: Vec<EvalRecord>,
    /// Items whose trace could not be written.
    pub trace_failures: Vec<String>,
}

/// Answer and score every item in `lang` with the pipeline's configured
/// mode, using up to `jobs` worker threads. Writes `records.<lang>.jsonl`,
/// `report.json` and one trace per item (under `traces/`) into `out_dir`.
/// Per-item failures are scored 0 and flagged, never propagated.
pub fn run_benchmark(
    items: &[BenchmarkItem],
    lang: &LanguageTag,
    pipeline: &Pipeline,
    dataset: &str,
    out_dir: &Path,
    jobs: usize,
) -> Result<BenchmarkRun, EvalError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let trace_dir = out_dir.join("traces");
    let mode = pipeline.solver.mode;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Scored>>> = Mutex::new(vec![None; items.len()]);

    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(item) = items.get(i) else { break };
        let outcome = score_item(item, lang, pipeline, dataset, &trace_dir);
        results.lock().expect("results poisoned")[i] = Some(outcome);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            s.spawn(work);
        }
    });

    let mut records = Vec::with_capacity(items.len());
    let mut trace_failures = Vec::new();
    for (record, trace_failure) in results.into_inner().expect("results poisoned").into_iter().flatten() {
        if let Some(f) = trace_failure {
            trace_failures.push(f);
        }
        records.push(record);
    }

    let records_path = out_dir.join(format!("records.{lang}.jsonl"));
    let mut body = String::new();
    for r in &records {
        body.push_str(&serde_json::to_string(r).expect("records serialize"));
        body.push('\n');
    }
    std::fs::write(&records_path, body).map_err(|e| io_error(&records_path, e))?;

    let report = Report::from_records(dataset, lang, mode, &records);
    let report_path = out_dir.join("report.json");
    let mut file = std::fs::File::create(&report_path).map_err(|e| io_error(&report_path, e))?;
    let text = serde_json::to_string_pretty(&report).expect("reports serialize");
    writeln!(file, "{text}").map_err(|e| io_error(&report_path, e))?;

    Ok(BenchmarkRun {
        report,
        records,
        trace_failures,
    })
}

fn score_item(
    item: &BenchmarkItem,
    lang: &LanguageTag,
    pipeline: &Pipeline,
    dataset: &str,
    trace_dir: &Path,
) -> Scored {
    let mode = pipeline.solver.mode;
    let Some(text) = item.questions.get(lang) else {
        let mut record = EvalRecord::score(item, lang, mode, "");
        record.em = 0;
        record.f1 = 0.0;
        record.error = Some(format!("no question in `{lang}`"));
        return (record, None);
    };
    let query = match Query::new(text.clone(), lang.clone()) {
        Ok(q) => q,
        Err(e) => {
            let mut record = EvalRecord::score(item, lang, mode, "");
            record.f1 = 0.0;
            record.em = 0;
            record.error = Some(e.to_string());
            return (record, None);
        }
    };
    let started = Instant::now();
    let trace = pipeline.answer_question(&query, &item.qid);
    let latency_ms = started.elapsed().as_millis() as u64;

    let mut record = EvalRecord::score(item, lang, mode, &trace.final_answer);
    if let Some(e) = &trace.error {
        record.em = 0;
        record.f1 = 0.0;
        record.error = Some(e.clone());
    }
    record.latency_ms = latency_ms;
    record.token_usage = trace.usage.clone();
    let trace_failure = write_trace(trace_dir, dataset, &trace)
        .err()
        .map(|e| format!("{}: {e}", item.qid));
    (record, trace_failure)
}
