//! Deterministic backends for tests, examples and offline demos.
//!
//! Replies are pure functions of the request: the first [`ChatRule`] whose
//! tag and substrings match the last user message wins. Embeddings come
//! from a fixed text→vector table, falling back to hashed character
//! trigram features.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    check_dimensions, normalize, BackendError, BackendIdentity, ChatBackend, ChatRequest, Completion,
    EmbedRequest, Embedder, TokenUsage,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRule {
    /// Only requests with this stage tag match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Every substring must occur in the last user message.
    #[serde(default, deserialize_with = "one_or_many")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// Fail with a transport error instead of replying.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<String>,
}

impl ChatRule {
    pub fn reply(tag: Option<&str>, contains: &[&str], reply: &str) -> Self {
        Self {
            tag: tag.map(str::to_string),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            reply: Some(reply.to_string()),
            fail: None,
        }
    }

    pub fn fail(tag: Option<&str>, contains: &[&str], message: &str) -> Self {
        Self {
            tag: tag.map(str::to_string),
            contains: contains.iter().map(|s| s.to_string()).collect(),
            reply: None,
            fail: Some(message.to_string()),
        }
    }

    fn matches(&self, req: &ChatRequest) -> bool {
        if self.tag.as_deref().is_some_and(|t| t != req.tag) {
            return false;
        }
        let msg = req.last_user_message().unwrap_or_default();
        self.contains.iter().all(|s| msg.contains(s.as_str()))
    }
}

#[derive(Debug, Default)]
pub struct ScriptedChat {
    rules: Vec<ChatRule>,
    default_reply: Option<String>,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new(rules: Vec<ChatRule>) -> Self {
        Self {
            rules,
            ..Default::default()
        }
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.default_reply = Some(reply.into());
        self
    }

    pub fn push(&mut self, rule: ChatRule) {
        self.rules.push(rule);
    }

    /// Every request seen so far, in arrival order.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("log poisoned").clone()
    }

    pub fn calls_tagged(&self, tag: &str) -> usize {
        self.log.lock().expect("log poisoned").iter().filter(|r| r.tag == tag).count()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().expect("log poisoned").len()
    }

    pub fn reset_log(&self) {
        self.log.lock().expect("log poisoned").clear();
    }
}

fn whitespace_tokens(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl ChatBackend for ScriptedChat {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::chat("scripted", "scripted://")
    }

    fn complete(&self, req: &ChatRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        self.log.lock().expect("log poisoned").push(req.clone());
        let rule = self.rules.iter().find(|r| r.matches(req));
        let text = match rule {
            Some(ChatRule { fail: Some(msg), .. }) => return Err(BackendError::Transport(msg.clone())),
            Some(ChatRule { reply: Some(reply), .. }) => reply.clone(),
            Some(_) => String::new(),
            None => self.default_reply.clone().ok_or_else(|| {
                BackendError::Scripted(format!(
                    "no rule for tag `{}`: {}",
                    req.tag,
                    req.last_user_message().unwrap_or_default()
                ))
            })?,
        };
        let prompt_tokens = req.messages.iter().map(|m| whitespace_tokens(&m.content)).sum();
        Ok(Completion {
            usage: TokenUsage {
                calls: 1,
                prompt_tokens,
                completion_tokens: whitespace_tokens(&text),
            },
            text,
        })
    }
}

#[derive(Debug)]
pub struct ScriptedEmbedder {
    dimension: usize,
    table: BTreeMap<String, Vec<f64>>,
    calls: Mutex<Vec<usize>>,
}

impl ScriptedEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension: dimension.max(1),
            table: BTreeMap::new(),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with_vector(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.insert(text, vector);
        self
    }

    pub fn insert(&mut self, text: impl Into<String>, vector: Vec<f64>) {
        self.table.insert(text.into().trim().to_string(), vector);
    }

    /// Number of `embed` calls so far.
    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("log poisoned").len()
    }

    /// Total texts embedded so far.
    pub fn texts_embedded(&self) -> usize {
        self.calls.lock().expect("log poisoned").iter().sum()
    }

    fn lookup(&self, text: &str) -> Vec<f64> {
        match self.table.get(text.trim()) {
            Some(v) => v.clone(),
            None => hashed_features(text, self.dimension),
        }
    }
}

/// Bag of lowercase character trigrams hashed (FNV-1a) into `dim` buckets.
pub fn hashed_features(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let padded: Vec<char> = format!("  {}  ", text.trim().to_lowercase()).chars().collect();
    for w in padded.windows(3) {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in w {
            for b in c.to_string().bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        v[(h % dim as u64) as usize] += 1.0;
    }
    v
}

impl Embedder for ScriptedEmbedder {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::embed("scripted", "scripted://", self.dimension)
    }

    fn embed(&self, req: &EmbedRequest) -> Result<Vec<Vec<f64>>, BackendError> {
        self.calls.lock().expect("log poisoned").push(req.texts.len());
        let mut out: Vec<Vec<f64>> = req.texts.iter().map(|t| self.lookup(t)).collect();
        check_dimensions(&out, None)?;
        check_dimensions(&out, Some(self.dimension))?;
        for v in &mut out {
            normalize(v)?;
        }
        Ok(out)
    }
}

/// JSON fixture describing both scripted backends, loadable by the CLI.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub chat: Vec<ChatRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_reply: Option<String>,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub vectors: BTreeMap<String, Vec<f64>>,
}

fn default_dimension() -> usize {
    64
}

impl ScriptFile {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Protocol(format!("{}: {e}", path.display())))
    }

    pub fn chat(&self) -> ScriptedChat {
        let chat = ScriptedChat::new(self.chat.clone());
        match &self.default_reply {
            Some(d) => chat.with_default(d.clone()),
            None => chat,
        }
    }

    pub fn embedder(&self) -> ScriptedEmbedder {
        let mut e = ScriptedEmbedder::new(self.dimension);
        for (text, v) in &self.vectors {
            e.insert(text.clone(), v.clone());
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substring_rules_in_order() {
        let chat = ScriptedChat::new(vec![
            ChatRule::reply(Some("judge"), &["1970"], "yes"),
            ChatRule::reply(None, &["capital", "France"], "Paris"),
            ChatRule::fail(None, &["boom"], "connection reset"),
        ]);
        let ask = |tag: &str, msg: &str| chat.complete(&ChatRequest::new(tag).user(msg));
        assert_eq!(ask("answer", "What is the capital of France?").unwrap().text, "Paris");
        assert_eq!(ask("judge", "1970 vs 1970").unwrap().text, "yes");
        assert!(matches!(ask("answer", "1970"), Err(BackendError::Scripted(_))));
        assert!(matches!(ask("answer", "boom"), Err(BackendError::Transport(_))));
        assert_eq!(chat.call_count(), 4);
        assert_eq!(chat.calls_tagged("judge"), 1);
    }

    #[test]
    fn replies_are_pure() {
        let chat = ScriptedChat::new(vec![]).with_default("ok");
        let req = ChatRequest::new("x").user("hello");
        assert_eq!(chat.complete(&req).unwrap(), chat.complete(&req).unwrap());
    }

    #[test]
    fn table_vectors_are_normalized() {
        let e = ScriptedEmbedder::new(2).with_vector("a", vec![3.0, 4.0]);
        let out = e.embed(&EmbedRequest::new(["a", "a"]).unwrap()).unwrap();
        assert_eq!(out[0], vec![0.6, 0.8]);
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn mixed_dimensions_fail() {
        let e = ScriptedEmbedder::new(768)
            .with_vector("a", vec![1.0; 768])
            .with_vector("b", vec![1.0; 384]);
        let err = e.embed(&EmbedRequest::new(["a", "b"]).unwrap()).unwrap_err();
        assert_eq!(err, BackendError::DimensionMismatch { expected: 768, got: 384 });
    }

    #[test]
    fn hashed_fallback_unit_norm() {
        let e = ScriptedEmbedder::new(32);
        let out = e.embed(&EmbedRequest::new(["some text", "x"]).unwrap()).unwrap();
        for v in out {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn script_file_parses_single_or_list_contains() {
        let json = r#"{"chat":[{"tag":"answer","contains":"X","reply":"1"},
            {"contains":["a","b"],"reply":"2"}],"dimension":8,"vectors":{"q":[1,0,0,0,0,0,0,0]}}"#;
        let script: ScriptFile = serde_json::from_str(json).unwrap();
        assert_eq!(script.chat[0].contains, vec!["X"]);
        assert_eq!(script.chat[1].contains, vec!["a", "b"]);
        assert_eq!(script.embedder().dimension(), 8);
    }
}
