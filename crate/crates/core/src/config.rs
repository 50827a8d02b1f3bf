//! Engine configuration, written in the same restricted YAML dialect as
//! policies.
//!
//! ```yaml
//! policy_paths: ["policies/default-pack.yaml"]
//! mode: inline
//! ring_capacity: 8192
//! learning_window: 1000
//! rarity_threshold: 0.001
//! fail_policy: closed
//! sink_path: "alerts.jsonl"
//! watchdog_ms: 100
//! profile_granularity: container
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::analyzer::{AnalyzerConfig, Granularity, DEFAULT_LEARNING_WINDOW, DEFAULT_RARITY_THRESHOLD};
use crate::enforcer::FailPolicy;
use crate::pipeline::{PipelineOptions, DEFAULT_RING_CAPACITY};
use crate::policy::yaml::{self, Mapping, Node};
use crate::probe::BufferMode;

pub const MIN_RING_CAPACITY: usize = 64;
pub const DEFAULT_WATCHDOG_MS: u64 = 100;
/// Environment variable naming a config file.
pub const CONFIG_ENV: &str = "PATROL_CONFIG";

const KEYS: &[&str] = &[
    "policy_paths",
    "mode",
    "ring_capacity",
    "learning_window",
    "rarity_threshold",
    "fail_policy",
    "sink_path",
    "watchdog_ms",
    "profile_granularity",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Policy files, loaded in order. Empty means the built-in pack.
    pub policy_paths: Vec<PathBuf>,
    pub mode: BufferMode,
    pub ring_capacity: usize,
    pub learning_window: u64,
    pub rarity_threshold: f64,
    pub fail_policy: FailPolicy,
    pub sink_path: Option<PathBuf>,
    pub watchdog_ms: u64,
    pub profile_granularity: Granularity,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            policy_paths: Vec::new(),
            mode: BufferMode::Inline,
            ring_capacity: DEFAULT_RING_CAPACITY,
            learning_window: DEFAULT_LEARNING_WINDOW,
            rarity_threshold: DEFAULT_RARITY_THRESHOLD,
            fail_policy: FailPolicy::Closed,
            sink_path: None,
            watchdog_ms: DEFAULT_WATCHDOG_MS,
            profile_granularity: Granularity::Container,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("config line {line}: unknown key `{name}`")]
    UnknownKey { name: String, line: usize },
    #[error("config line {line}: invalid {key} `{value}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        line: usize,
        reason: String,
    },
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<yaml::SyntaxError> for ConfigError {
    fn from(e: yaml::SyntaxError) -> Self {
        ConfigError::Syntax {
            line: e.line,
            col: e.col,
            message: e.message,
        }
    }
}

fn invalid(key: &str, value: &str, line: usize, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        line,
        reason: reason.to_string(),
    }
}

fn scalar<'a>(key: &str, node: &'a Node) -> Result<&'a str, ConfigError> {
    match node {
        Node::Scalar(s) => Ok(&s.text),
        other => Err(invalid(key, "", other.pos().line, "expected a scalar")),
    }
}

fn number<T: std::str::FromStr>(key: &str, node: &Node) -> Result<T, ConfigError> {
    let text = scalar(key, node)?;
    text.parse()
        .map_err(|_| invalid(key, text, node.pos().line, "not a number"))
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<EngineConfig, ConfigError> {
        let docs = yaml::parse_documents(text)?;
        let mut cfg = EngineConfig::default();
        let Some(doc) = docs.first() else {
            return Ok(cfg);
        };
        if let Some(extra) = docs.get(1) {
            return Err(ConfigError::Syntax {
                line: extra.pos.line,
                col: extra.pos.col,
                message: "config holds a single document".into(),
            });
        }
        cfg.apply(doc)?;
        cfg.validate_at(doc)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EngineConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        EngineConfig::parse(&text)
    }

    fn apply(&mut self, doc: &Mapping) -> Result<(), ConfigError> {
        for (key, node) in &doc.entries {
            let name = key.name.as_str();
            let line = node.pos().line;
            match name {
                "policy_paths" => {
                    self.policy_paths = match node {
                        Node::Seq(items, _) => items.iter().map(|s| PathBuf::from(&s.text)).collect(),
                        Node::Null(_) => Vec::new(),
                        _ => return Err(invalid(name, "", line, "expected a list")),
                    }
                }
                "mode" => {
                    let v = scalar(name, node)?;
                    self.mode = v
                        .parse()
                        .map_err(|_| invalid(name, v, line, "expected observe or inline"))?;
                }
                "ring_capacity" => self.ring_capacity = number(name, node)?,
                "learning_window" => self.learning_window = number(name, node)?,
                "rarity_threshold" => self.rarity_threshold = number(name, node)?,
                "fail_policy" => {
                    let v = scalar(name, node)?;
                    self.fail_policy = v
                        .parse()
                        .map_err(|_| invalid(name, v, line, "expected open or closed"))?;
                }
                "sink_path" => {
                    self.sink_path = match node {
                        Node::Null(_) => None,
                        _ => Some(PathBuf::from(scalar(name, node)?)),
                    }
                }
                "watchdog_ms" => self.watchdog_ms = number(name, node)?,
                "profile_granularity" => {
                    let v = scalar(name, node)?;
                    self.profile_granularity = v
                        .parse()
                        .map_err(|_| invalid(name, v, line, "expected container or process"))?;
                }
                _ => {
                    debug_assert!(!KEYS.contains(&name));
                    return Err(ConfigError::UnknownKey {
                        name: name.to_string(),
                        line: key.pos.line,
                    });
                }
            }
        }
        Ok(())
    }

    fn validate_at(&self, doc: &Mapping) -> Result<(), ConfigError> {
        let line_of = |k: &str| doc.get(k).map_or(doc.pos.line, |n| n.pos().line);
        self.validate()
            .map_err(|(key, value, reason)| invalid(key, &value, line_of(key), reason))
    }

    /// Checks value ranges; returns (key, value, reason) on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String, &'static str)> {
        if !self.ring_capacity.is_power_of_two() || self.ring_capacity < MIN_RING_CAPACITY {
            return Err((
                "ring_capacity",
                self.ring_capacity.to_string(),
                "must be a power of two of at least 64",
            ));
        }
        if !(self.rarity_threshold > 0.0 && self.rarity_threshold < 1.0) {
            return Err((
                "rarity_threshold",
                self.rarity_threshold.to_string(),
                "must lie strictly between 0 and 1",
            ));
        }
        if self.learning_window == 0 {
            return Err(("learning_window", "0".into(), "must be positive"));
        }
        if self.watchdog_ms == 0 {
            return Err(("watchdog_ms", "0".into(), "must be positive"));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let paths: Vec<String> = self
            .policy_paths
            .iter()
            .map(|p| yaml::quote(&p.to_string_lossy()))
            .collect();
        let mut out = String::new();
        out.push_str(&format!("policy_paths: [{}]\n", paths.join(", ")));
        out.push_str(&format!("mode: {}\n", self.mode.as_str()));
        out.push_str(&format!("ring_capacity: {}\n", self.ring_capacity));
        out.push_str(&format!("learning_window: {}\n", self.learning_window));
        out.push_str(&format!("rarity_threshold: {:?}\n", self.rarity_threshold));
        out.push_str(&format!("fail_policy: {}\n", self.fail_policy.as_str()));
        if let Some(sink) = &self.sink_path {
            out.push_str(&format!("sink_path: {}\n", yaml::quote(&sink.to_string_lossy())));
        }
        out.push_str(&format!("watchdog_ms: {}\n", self.watchdog_ms));
        out.push_str(&format!("profile_granularity: {}\n", self.profile_granularity.as_str()));
        out
    }

    pub fn watchdog(&self) -> Duration {
        Duration::from_millis(self.watchdog_ms)
    }

    pub fn analyzer(&self) -> AnalyzerConfig {
        AnalyzerConfig {
            learning_window: self.learning_window,
            rarity_threshold: self.rarity_threshold,
            granularity: self.profile_granularity,
        }
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            mode: self.mode,
            ring_capacity: self.ring_capacity,
            watchdog: self.watchdog(),
            fail_policy: self.fail_policy,
            analyzer: self.analyzer(),
            sink_path: self.sink_path.clone(),
            ..PipelineOptions::default()
        }
    }
}
