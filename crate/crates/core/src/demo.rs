//! Self-contained scripted scenarios for examples, tests and offline demos.
//!
//! A [`Scenario`] bundles scripted backend rules, small per-language corpora
//! and benchmark items whose gold answers the script reproduces. It can be
//! run in-process ([`Scenario::pipeline`]) or written to disk for the CLI
//! (`--script`, `--corpus-dir`, `--dataset`).

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::backends::{ChatRule, ScriptFile, ScriptedChat, ScriptedEmbedder};
use crate::eval::BenchmarkItem;
use crate::qgraph::LanguageTag;
use crate::retrieval::{corpus_path, CorpusIndex, Document, IndexSet};
use crate::solver::{Backends, Pipeline};

pub const DEMO_DIMENSION: usize = 32;

fn basis(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; DEMO_DIMENSION];
    v[i] = 1.0;
    v
}

fn lang(code: &str) -> LanguageTag {
    LanguageTag::new(code).expect("static tag")
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub dataset: String,
    pub lang: LanguageTag,
    /// The headline question and its scripted final answer.
    pub question: String,
    pub answer: String,
    pub script: ScriptFile,
    pub corpora: BTreeMap<LanguageTag, Vec<Document>>,
    pub benchmark: Vec<BenchmarkItem>,
}

/// Paths produced by [`Scenario::write`].
#[derive(Debug, Clone)]
pub struct ScenarioFiles {
    pub script: PathBuf,
    pub corpus_dir: PathBuf,
    pub benchmark: PathBuf,
}

/// Scripted backends, kept concrete so callers can inspect the call logs.
pub struct ScriptedBackends {
    pub chat: Arc<ScriptedChat>,
    pub embedder: Arc<ScriptedEmbedder>,
}

impl ScriptedBackends {
    pub fn backends(&self) -> Backends {
        Backends::new(self.chat.clone(), self.embedder.clone())
    }
}

impl Scenario {
    pub fn scripted(&self) -> ScriptedBackends {
        ScriptedBackends {
            chat: Arc::new(self.script.chat()),
            embedder: Arc::new(self.script.embedder()),
        }
    }

    pub fn indexes(&self, backends: &Backends) -> IndexSet {
        self.corpora
            .iter()
            .map(|(l, docs)| {
                let index = CorpusIndex::from_documents(l.clone(), docs.clone(), backends.embedder.as_ref())
                    .expect("demo corpora index cleanly");
                (l.clone(), Arc::new(index))
            })
            .collect()
    }

    /// A pipeline over fresh scripted backends, plus those backends.
    pub fn pipeline(&self) -> (Pipeline, ScriptedBackends) {
        let scripted = self.scripted();
        let backends = scripted.backends();
        let indexes = self.indexes(&backends);
        (Pipeline::new(backends, indexes), scripted)
    }

    /// Write `script.json`, `<dataset>.<lang>.jsonl` corpora and
    /// `<dataset>.bench.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<ScenarioFiles> {
        std::fs::create_dir_all(dir)?;
        let script = dir.join("script.json");
        std::fs::write(&script, serde_json::to_string_pretty(&self.script)? + "\n")?;
        for (l, docs) in &self.corpora {
            let mut body = String::new();
            for d in docs {
                let line = serde_json::json!({"id": d.id, "title": d.title, "text": d.text});
                body.push_str(&line.to_string());
                body.push('\n');
            }
            std::fs::write(corpus_path(dir, &self.dataset, l), body)?;
        }
        let benchmark = dir.join(format!("{}.bench.jsonl", self.dataset));
        let mut body = String::new();
        for item in &self.benchmark {
            body.push_str(&serde_json::to_string(item)?);
            body.push('\n');
        }
        std::fs::write(&benchmark, body)?;
        Ok(ScenarioFiles {
            script,
            corpus_dir: dir.to_path_buf(),
            benchmark,
        })
    }
}

fn doc(id: &str, l: &LanguageTag, title: &str, text: &str) -> Document {
    Document {
        id: id.to_string(),
        title: title.to_string(),
        text: text.to_string(),
        lang: l.clone(),
    }
}

fn answer(contains: &[&str], reply: &str) -> ChatRule {
    ChatRule::reply(Some("answer"), contains, reply)
}

/// A German two-hop-plus question with a three-node German plan and a
/// four-node English plan. Exactly one node pair fuses (the director
/// question); its two candidates disagree, the judge rejects them, and one
/// regeneration recovers the answer.
pub fn metropolis() -> Scenario {
    let de = lang("de");
    let en = LanguageTag::english();
    let question = "Welcher Fluss fließt durch die Geburtsstadt des Regisseurs von Metropolis?";
    let english = "Which river flows through the birthplace of the director of Metropolis?";
    let de_plan = r#"{"sub_questions": ["Wer führte Regie bei Metropolis?", "Wo wurde <1> geboren?", "Welcher Fluss fließt durch <2>?"], "dependencies": [[1, 2], [2, 3]]}"#;
    let en_plan = r#"{"sub_questions": ["Who directed Metropolis?", "Where was <1> born?", "In which country is <2>?", "Which river flows through <2>?"], "dependencies": [[1, 2], [2, 3], [2, 4]]}"#;

    let chat = vec![
        ChatRule::reply(Some("translate"), &["Text: Welcher Fluss"], english),
        ChatRule::reply(Some("translate"), &["Text: Danube"], "Donau"),
        ChatRule::reply(Some("decompose"), &["Question: Welcher Fluss"], de_plan),
        ChatRule::reply(Some("decompose"), &["Question: Which river"], en_plan),
        answer(&["Question: Wer führte Regie bei Metropolis?"], "Fritz Lang"),
        answer(&["Question: Who directed Metropolis?"], "Lang"),
        answer(&["Question: Wo wurde", "Lang geboren?"], "Wien"),
        answer(&["Question: Welcher Fluss fließt durch Wien?"], "Donau"),
        answer(&["Question: Where was", "Lang born?"], "Vienna"),
        answer(&["Question: In which country is Vienna?"], "Austria"),
        answer(&["Question: Which river flows through Vienna?"], "Danube"),
        answer(&["Question: Welcher Fluss fließt durch die Geburtsstadt"], "Donau"),
        ChatRule::reply(Some("judge"), &[], "no, answer B does not identify the director unambiguously"),
        ChatRule::reply(Some("regen"), &[], "Fritz Lang"),
        ChatRule::reply(Some("sufficiency"), &[], "yes"),
        ChatRule::reply(Some("synthesize"), &["Question: Welcher Fluss"], "Donau"),
        ChatRule::reply(Some("synthesize"), &["Question: Which river"], "Danube"),
    ];
    // Node texts as embedded for fusion: only the director questions align.
    let vectors = [
        ("Wer führte Regie bei Metropolis?", 0),
        ("Who directed Metropolis?", 0),
        ("Wo wurde <1> geboren?", 1),
        ("Welcher Fluss fließt durch <2>?", 2),
        ("Where was <1> born?", 3),
        ("In which country is <2>?", 4),
        ("Which river flows through <2>?", 5),
    ]
    .into_iter()
    .map(|(t, i)| (t.to_string(), basis(i)))
    .collect();

    let corpora = BTreeMap::from([
        (
            de.clone(),
            vec![
                doc("de-1", &de, "Metropolis (1927)", "Metropolis ist ein Stummfilm von Fritz Lang aus dem Jahr 1927."),
                doc("de-2", &de, "Fritz Lang", "Fritz Lang wurde 1890 in Wien geboren."),
                doc("de-3", &de, "Wien", "Die Donau fließt durch Wien."),
                doc("de-4", &de, "Thea von Harbou", "Thea von Harbou schrieb das Drehbuch zu Metropolis."),
            ],
        ),
        (
            en.clone(),
            vec![
                doc("en-1", &en, "Metropolis (film)", "Metropolis is a 1927 silent film directed by Fritz Lang."),
                doc("en-2", &en, "Fritz Lang", "Fritz Lang was born in Vienna in 1890."),
                doc("en-3", &en, "Vienna", "Vienna, the capital of Austria, lies on the Danube."),
                doc("en-4", &en, "Danube", "The Danube flows through Vienna, Bratislava and Budapest."),
            ],
        ),
    ]);
    let benchmark = vec![BenchmarkItem {
        qid: "metropolis".into(),
        questions: BTreeMap::from([(de.clone(), question.to_string()), (en.clone(), english.to_string())]),
        gold_answers: vec!["Donau".into(), "Danube".into()],
        gold_lang: en,
    }];
    Scenario {
        dataset: "metropolis".into(),
        lang: de,
        question: question.into(),
        answer: "Donau".into(),
        script: ScriptFile {
            chat,
            default_reply: None,
            dimension: DEMO_DIMENSION,
            vectors,
        },
        corpora,
        benchmark,
    }
}

const FOUNDERS: [&str; 10] = [
    "Anna Berg",
    "Jonas Weber",
    "Lena Vogt",
    "Paul Richter",
    "Mia Hartmann",
    "Felix Krause",
    "Sophie Lorenz",
    "Lukas Brandt",
    "Emma Seidel",
    "Noah Fischer",
];

const CITIES: [(&str, &str); 10] = [
    ("München", "Munich"),
    ("Köln", "Cologne"),
    ("Wien", "Vienna"),
    ("Prag", "Prague"),
    ("Rom", "Rome"),
    ("Warschau", "Warsaw"),
    ("Mailand", "Milan"),
    ("Genf", "Geneva"),
    ("Lissabon", "Lisbon"),
    ("Kopenhagen", "Copenhagen"),
];

/// `n` (≤ 10) two-hop German questions ("where was the founder of company
/// i born?") scripted so the full pipeline answers every one correctly.
/// Both plan nodes fuse; the founder candidates agree verbatim and the
/// birthplace candidates are judged consistent.
pub fn founders(n: usize) -> Scenario {
    assert!(n <= FOUNDERS.len(), "at most {} founder questions", FOUNDERS.len());
    let de = lang("de");
    let en = LanguageTag::english();
    let mut chat = Vec::new();
    let mut de_docs = Vec::new();
    let mut en_docs = Vec::new();
    let mut benchmark = Vec::new();
    for i in 0..n {
        let company = i + 1;
        let founder = FOUNDERS[i];
        let (city_de, city_en) = CITIES[i];
        let q_de = format!("Wo wurde die Gründerin von Firma {company} geboren?");
        let q_en = format!("Where was the founder of Company {company} born?");
        let plan_de = format!(
            r#"{{"sub_questions": ["Wer gründete Firma {company}?", "Wo wurde <1> geboren?"], "dependencies": [[1, 2]]}}"#
        );
        let plan_en = format!(
            r#"{{"sub_questions": ["Who founded Company {company}?", "Where was <1> born?"], "dependencies": [[1, 2]]}}"#
        );
        chat.extend([
            ChatRule::reply(Some("translate"), &[&format!("Text: {q_de}")], &q_en),
            ChatRule::reply(Some("translate"), &[&format!("Text: {city_en}")], city_de),
            ChatRule::reply(Some("decompose"), &[&format!("Question: {q_de}")], &plan_de),
            ChatRule::reply(Some("decompose"), &[&format!("Question: {q_en}")], &plan_en),
            answer(&[&format!("Question: Wer gründete Firma {company}?")], founder),
            answer(&[&format!("Question: Who founded Company {company}?")], founder),
            answer(&[&format!("Question: Wo wurde {founder} geboren?")], city_de),
            answer(&[&format!("Question: Where was {founder} born?")], city_en),
            answer(&[&format!("Question: {q_de}")], city_de),
            answer(&[&format!("Question: {q_en}")], city_en),
            ChatRule::reply(Some("synthesize"), &[&format!("Question: {q_de}")], city_de),
            ChatRule::reply(Some("synthesize"), &[&format!("Question: {q_en}")], city_en),
        ]);
        de_docs.push(doc(
            &format!("de-{company}"),
            &de,
            &format!("Firma {company}"),
            &format!("Firma {company} wurde von {founder} gegründet, die in {city_de} geboren wurde."),
        ));
        en_docs.push(doc(
            &format!("en-{company}"),
            &en,
            &format!("Company {company}"),
            &format!("Company {company} was founded by {founder}, who was born in {city_en}."),
        ));
        benchmark.push(BenchmarkItem {
            qid: format!("f{company:02}"),
            questions: BTreeMap::from([(de.clone(), q_de), (en.clone(), q_en)]),
            gold_answers: vec![city_de.to_string(), city_en.to_string()],
            gold_lang: en.clone(),
        });
    }
    chat.extend([
        ChatRule::reply(Some("judge"), &[], "yes"),
        ChatRule::reply(Some("sufficiency"), &[], "yes"),
    ]);
    let mut vectors = BTreeMap::new();
    for i in 0..n {
        vectors.insert(format!("Wer gründete Firma {}?", i + 1), basis(0));
        vectors.insert(format!("Who founded Company {}?", i + 1), basis(0));
    }
    vectors.insert("Wo wurde <1> geboren?".to_string(), basis(1));
    vectors.insert("Where was <1> born?".to_string(), basis(1));

    Scenario {
        dataset: "founders".into(),
        lang: de.clone(),
        question: benchmark.first().map(|b| b.questions[&de].clone()).unwrap_or_default(),
        answer: CITIES[0].0.to_string(),
        script: ScriptFile {
            chat,
            default_reply: None,
            dimension: DEMO_DIMENSION,
            vectors,
        },
        corpora: BTreeMap::from([(de, de_docs), (en, en_docs)]),
        benchmark,
    }
}
