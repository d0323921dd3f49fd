//! Prompt templates.
//!
//! Templates are plain UTF-8 files under `prompts/` with `{{name}}`
//! placeholders. Leading `#` lines are a header; `# version: N` sets the
//! template version recorded in traces. The built-in set is compiled in and
//! any file in an override directory replaces the template of the same name.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

pub const SYSTEM_PROMPT: &str = "You are a precise multilingual question answering assistant.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("template `{template}` uses unknown placeholder `{{{{{name}}}}}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template `{template}` has an unterminated placeholder")]
    Unterminated { template: String },
}

/// Every template and the placeholders it may use.
pub const TEMPLATES: &[(&str, &[&str])] = &[
    ("translate", &["source_lang", "target_lang", "text"]),
    ("decompose", &["lang", "max_nodes", "question"]),
    ("answer", &["context", "question"]),
    ("judge", &["source_lang", "question", "answer_source", "answer_en"]),
    ("sufficiency", &["question", "answer"]),
    ("regen", &["path", "context", "candidates", "question"]),
    ("synthesize", &["chain", "context", "question"]),
];

const BUILTIN: &[(&str, &str)] = &[
    ("translate", include_str!("../prompts/translate.txt")),
    ("decompose", include_str!("../prompts/decompose.txt")),
    ("answer", include_str!("../prompts/answer.txt")),
    ("judge", include_str!("../prompts/judge.txt")),
    ("sufficiency", include_str!("../prompts/sufficiency.txt")),
    ("regen", include_str!("../prompts/regen.txt")),
    ("synthesize", include_str!("../prompts/synthesize.txt")),
];

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    name: String,
    version: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self, PromptError> {
        let mut version = "0".to_string();
        let mut body_start = 0;
        for line in source.split_inclusive('\n') {
            let Some(comment) = line.strip_prefix('#') else { break };
            if let Some(v) = comment.trim().strip_prefix("version:") {
                version = v.trim().to_string();
            }
            body_start += line.len();
        }
        let body = source[body_start..].trim_end_matches('\n');
        let allowed = TEMPLATES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, vars)| *vars);
        let mut pieces = Vec::new();
        let mut rest = body;
        while let Some(open) = rest.find("{{") {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_string()));
            }
            let after = &rest[open + 2..];
            let close = after.find("}}").ok_or_else(|| PromptError::Unterminated {
                template: name.to_string(),
            })?;
            let var = after[..close].trim().to_string();
            if allowed.is_some_and(|vars| !vars.contains(&var.as_str())) {
                return Err(PromptError::UnknownPlaceholder {
                    template: name.to_string(),
                    name: var,
                });
            }
            pieces.push(Piece::Var(var));
            rest = &after[close + 2..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
            version,
            pieces,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Single-pass substitution; values are inserted verbatim. Unset
    /// placeholders render as empty strings.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Var(v) => {
                    if let Some((_, value)) = vars.iter().find(|(k, _)| k == v) {
                        out.push_str(value);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    templates: BTreeMap<String, Template>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(name, src)| {
                let t = Template::parse(name, src).expect("built-in templates are valid");
                (name.to_string(), t)
            })
            .collect();
        Self { templates }
    }

    /// Built-ins, overridden by `<dir>/<name>.txt` where present.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        for (name, _) in TEMPLATES {
            let path = dir.join(format!("{name}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(src) => {
                    set.templates.insert(name.to_string(), Template::parse(name, &src)?);
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => {
                    return Err(PromptError::Io {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> &Template {
        &self.templates[name]
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> String {
        self.get(name).render(vars)
    }

    /// `name@version` for every template, for trace headers.
    pub fn versions(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(n, t)| (n.clone(), t.version.clone()))
            .collect()
    }
}
