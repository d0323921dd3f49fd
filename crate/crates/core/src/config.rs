//! Run configuration: defaults, a flat `key = value` file, and flag overrides.
//!
//! Every command-line flag has a file key of the same name (without the
//! leading dashes). Values are applied in order default → file → flags, so
//! the last writer wins.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fusion::DEFAULT_TAU;
use crate::planning::PlanningConfig;
use crate::qgraph::LanguageTag;
use crate::solver::{Mode, DEFAULT_MAX_REGEN, DEFAULT_TOP_K};

pub const DEFAULT_JOBS: usize = 4;

/// File keys, which are also the flag names.
pub const KEYS: &[&str] = &[
    "tau",
    "top-k",
    "mode",
    "modes",
    "lang",
    "max-regen",
    "replay",
    "record",
    "out",
    "jobs",
    "dataset",
    "corpus-dir",
    "prompts",
    "script",
    "max-nodes",
    "decompose-retries",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Syntax { path: PathBuf, line: usize, message: String },
    #[error("unknown setting `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for {key}: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("{what} not found: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tau: f64,
    pub top_k: usize,
    pub max_regen: u32,
    pub mode: Mode,
    /// Modes swept by `bench`; empty means just `mode`.
    pub modes: Vec<Mode>,
    /// Question languages; `ask` uses the first.
    pub languages: Vec<LanguageTag>,
    /// Corpus files are `<corpus_dir>/<dataset>.<lang>.jsonl`.
    pub dataset: Option<String>,
    pub corpus_dir: PathBuf,
    pub prompts: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub out: PathBuf,
    pub jobs: usize,
    pub max_nodes: usize,
    pub decompose_retries: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let planning = PlanningConfig::default();
        Self {
            tau: DEFAULT_TAU,
            top_k: DEFAULT_TOP_K,
            max_regen: DEFAULT_MAX_REGEN,
            mode: Mode::Full,
            modes: Vec::new(),
            languages: vec![LanguageTag::english()],
            dataset: None,
            corpus_dir: PathBuf::from("."),
            prompts: None,
            replay: None,
            record: None,
            script: None,
            out: PathBuf::from("out"),
            jobs: DEFAULT_JOBS,
            max_nodes: planning.max_nodes,
            decompose_retries: planning.retries,
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_count<T>(key: &str, value: &str, min: T) -> Result<T, ConfigError>
where
    T: std::str::FromStr + PartialOrd + std::fmt::Display,
{
    let n: T = value.parse().map_err(|_| invalid(key, value, "expected a whole number"))?;
    if n < min {
        return Err(invalid(key, value, format!("must be at least {min}")));
    }
    Ok(n)
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunConfig {
    /// Apply one setting. `key` may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        let path = || PathBuf::from(value);
        match key.as_str() {
            "tau" => {
                let tau: f64 = value.parse().map_err(|_| invalid(&key, value, "expected a number"))?;
                if !(0.0..=1.0).contains(&tau) {
                    return Err(invalid(&key, value, "must lie in [0, 1]"));
                }
                self.tau = tau;
            }
            "top-k" => self.top_k = parse_count(&key, value, 1)?,
            "max-regen" => self.max_regen = parse_count(&key, value, 0)?,
            "jobs" => self.jobs = parse_count(&key, value, 1)?,
            "max-nodes" => self.max_nodes = parse_count(&key, value, 1)?,
            "decompose-retries" => self.decompose_retries = parse_count(&key, value, 0)?,
            "mode" => self.mode = value.parse().map_err(|e: String| invalid(&key, value, e))?,
            "modes" => {
                let modes = split_list(value)
                    .map(|m| m.parse::<Mode>().map_err(|e| invalid(&key, value, e)))
                    .collect::<Result<Vec<_>, _>>()?;
                if modes.is_empty() {
                    return Err(invalid(&key, value, "empty list"));
                }
                self.modes = modes;
            }
            "lang" => {
                let langs = split_list(value)
                    .map(|l| LanguageTag::new(l).map_err(|e| invalid(&key, value, e)))
                    .collect::<Result<Vec<_>, _>>()?;
                if langs.is_empty() {
                    return Err(invalid(&key, value, "empty list"));
                }
                self.languages = langs;
            }
            "dataset" => {
                if value.is_empty() || value.contains(['/', '\\']) {
                    return Err(invalid(&key, value, "expected a bare name"));
                }
                self.dataset = Some(value.to_string());
            }
            "corpus-dir" => self.corpus_dir = path(),
            "out" => self.out = path(),
            "prompts" => self.prompts = Some(path()),
            "replay" => self.replay = Some(path()),
            "record" => self.record = Some(path()),
            "script" => self.script = Some(path()),
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Apply a config file: one `key = value` per line, `#` starts a
    /// comment line, blank lines are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax("expected `key = value`".into()))?;
            self.set(key, value).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then `overrides` in order.
    pub fn resolve<'a>(
        file: Option<&Path>,
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn lang(&self) -> &LanguageTag {
        &self.languages[0]
    }

    /// Modes to run: the sweep list, or the single `mode`.
    pub fn sweep(&self) -> Vec<Mode> {
        if self.modes.is_empty() {
            vec![self.mode]
        } else {
            self.modes.clone()
        }
    }

    pub fn planning(&self) -> PlanningConfig {
        PlanningConfig {
            max_nodes: self.max_nodes,
            retries: self.decompose_retries,
        }
    }

    /// Check that every input path named by the config exists.
    pub fn validate_paths(&self) -> Result<(), ConfigError> {
        let check = |what, p: &Option<PathBuf>, dir: bool| match p {
            Some(p) if !(if dir { p.is_dir() } else { p.is_file() }) => Err(ConfigError::MissingPath {
                what,
                path: p.clone(),
            }),
            _ => Ok(()),
        };
        check("prompt directory", &self.prompts, true)?;
        check("replay cache", &self.replay, false)?;
        check("script file", &self.script, false)?;
        check("corpus directory", &Some(self.corpus_dir.clone()), true)?;
        Ok(())
    }
}
