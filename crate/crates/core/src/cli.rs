//! Command implementations behind the `patrol` binary. Each returns data;
//! printing and exit codes are left to the caller.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::ProfileStore;
use crate::config::{ConfigError, EngineConfig, CONFIG_ENV};
use crate::matrix::{render_matrix, run_matrix, DetectionMatrix, MatrixError};
use crate::pipeline::{run_pipeline, PipelineError, RunSummary};
use crate::policy::{self, lint, pack, CompileError, Diagnostic, PolicyError, PolicyHandle, PolicySet, Severity};
use crate::probe::{generate_scenario, generate_workload, ScenarioKind, Trace, TraceError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_POLICY: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const MIN_BENCH_EVENTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Policy {
        path: String,
        #[source]
        source: PolicyError,
    },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("lint found {0} error(s)")]
    LintErrors(usize),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a report file: {message}")]
    Report { path: PathBuf, message: String },
}

impl From<MatrixError> for CliError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::Compile(c) => CliError::Compile(c),
            MatrixError::Pipeline { source, .. } => CliError::Pipeline(source),
        }
    }
}

impl CliError {
    /// 0 success, 2 policy or config, 3 pipeline abort, 4 I/O or trace.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) => EXIT_IO,
            CliError::Config(_)
            | CliError::Policy { .. }
            | CliError::Compile(_)
            | CliError::LintErrors(_)
            | CliError::Usage(_) => EXIT_POLICY,
            CliError::Pipeline(PipelineError::Sink(_)) => EXIT_IO,
            CliError::Pipeline(_) => EXIT_ABORT,
            CliError::Trace(_) | CliError::Io { .. } | CliError::Report { .. } => EXIT_IO,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Config path precedence: explicit flag, then `PATROL_CONFIG`, then
/// built-in defaults.
pub fn resolve_config(flag: Option<&Path>, env: Option<&str>) -> Result<EngineConfig, CliError> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from));
    match path {
        Some(p) => Ok(EngineConfig::load(p)?),
        None => Ok(EngineConfig::default()),
    }
}

/// [`resolve_config`] reading the environment.
pub fn resolve_config_from_env(flag: Option<&Path>) -> Result<EngineConfig, CliError> {
    let env = std::env::var(CONFIG_ENV).ok();
    resolve_config(flag, env.as_deref())
}

/// Reads and concatenates policy files; no files means the built-in pack.
pub fn load_policies(paths: &[PathBuf]) -> Result<PolicySet, CliError> {
    if paths.is_empty() {
        return Ok(pack::default_pack());
    }
    let mut set = PolicySet::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let doc = policy::parse_policy_document(&text).map_err(|source| CliError::Policy {
            path: path.display().to_string(),
            source,
        })?;
        set.extend(doc).map_err(|source| CliError::Policy {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(set)
}

/// Serialized form of command output, readable by `patrol report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportDocument {
    Run {
        summary: RunSummary,
        profiles: ProfileStore,
    },
    Bench {
        event_count: usize,
        seed: u64,
        summary: RunSummary,
    },
    Matrix {
        matrices: Vec<DetectionMatrix>,
    },
}

impl ReportDocument {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<ReportDocument, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Report {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn render(&self) -> String {
        match self {
            ReportDocument::Run { summary, .. } => render_summary(summary),
            ReportDocument::Bench {
                event_count,
                seed,
                summary,
            } => format!("bench: {event_count} events, seed {seed}\n{}", render_summary(summary)),
            ReportDocument::Matrix { matrices } => matrices.iter().map(render_matrix).collect::<Vec<_>>().join("\n"),
        }
    }
}

pub fn cmd_replay(cfg: &EngineConfig, trace_path: &Path) -> Result<ReportDocument, CliError> {
    let policies = load_policies(&cfg.policy_paths)?;
    let trace = Trace::read_file(trace_path)?;
    let handle = PolicyHandle::from_policies(&policies)?;
    let out = run_pipeline(&trace, &handle, &cfg.pipeline_options())?;
    Ok(ReportDocument::Run {
        summary: out.summary,
        profiles: out.profiles,
    })
}

/// Runs every scenario in inline mode. With no policy files configured,
/// both the shipped pack and its uid-scoped adjustment are run.
pub fn cmd_matrix(cfg: &EngineConfig, seed: u64) -> Result<ReportDocument, CliError> {
    let opts = cfg.pipeline_options();
    let matrices = if cfg.policy_paths.is_empty() {
        vec![
            run_matrix("default-pack", &pack::default_pack(), seed, &opts)?,
            run_matrix("default-pack-uid-scoped", &pack::adjusted_pack(), seed, &opts)?,
        ]
    } else {
        let names: Vec<String> = cfg.policy_paths.iter().map(|p| p.display().to_string()).collect();
        vec![run_matrix(
            &names.join("+"),
            &load_policies(&cfg.policy_paths)?,
            seed,
            &opts,
        )?]
    };
    Ok(ReportDocument::Matrix { matrices })
}

pub fn cmd_bench(cfg: &EngineConfig, event_count: usize, seed: u64) -> Result<ReportDocument, CliError> {
    if event_count < MIN_BENCH_EVENTS {
        return Err(CliError::Usage(format!(
            "bench needs at least {MIN_BENCH_EVENTS} events for stable percentiles"
        )));
    }
    let policies = load_policies(&cfg.policy_paths)?;
    let trace = generate_workload(event_count, seed);
    let handle = PolicyHandle::from_policies(&policies)?;
    let out = run_pipeline(&trace, &handle, &cfg.pipeline_options())?;
    Ok(ReportDocument::Bench {
        event_count,
        seed,
        summary: out.summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LintReport {
    pub diagnostics: Vec<Diagnostic>,
    pub rules: usize,
}

impl LintReport {
    pub fn errors(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .count()
    }
}

/// Lints the policy files as one set (so shadowing across files is seen).
pub fn cmd_lint(paths: &[PathBuf]) -> Result<LintReport, CliError> {
    let set = load_policies(paths)?;
    Ok(LintReport {
        diagnostics: lint(&set),
        rules: set.len(),
    })
}

pub fn cmd_gen(kind: ScenarioKind, seed: u64, out: &Path) -> Result<Trace, CliError> {
    let trace = generate_scenario(kind, seed);
    trace.write_file(out)?;
    Ok(trace)
}

pub fn cmd_report(path: &Path, profiles: bool) -> Result<String, CliError> {
    let doc = ReportDocument::read(path)?;
    if !profiles {
        return Ok(doc.render());
    }
    match doc {
        ReportDocument::Run { profiles, .. } => {
            Ok(serde_json::to_string_pretty(&profiles).expect("profiles serialize"))
        }
        _ => Err(CliError::Usage(
            "--profiles needs a report written by `patrol replay --out`".into(),
        )),
    }
}

pub fn render_summary(s: &RunSummary) -> String {
    let d = &s.decisions;
    let t = &s.timing;
    let mut out = String::new();
    out.push_str(&format!(
        "mode {}: {} of {} events processed, {} dropped\n",
        s.mode.as_str(),
        s.events_processed,
        s.trace_len,
        s.drop_count
    ));
    out.push_str(&format!(
        "decisions: allow {} deny {} kill {} alert {} log {} suppressed {}\n",
        d.allow, d.deny, d.kill, d.alert, d.log, d.suppressed
    ));
    out.push_str(&format!(
        "alerts {} | behavior flags {} | errno returns {} | kills {} | verdict timeouts {}\n",
        s.alerts_emitted, s.behavior_flags, s.errno_returns, s.kills, s.verdict_timeouts
    ));
    out.push_str(&format!(
        "latency: mean {:.1} us, p50 {:.1} us, p99 {:.1} us, max {:.1} us | {:.0} events/sec\n",
        t.mean_ns as f64 / 1e3,
        t.p50_ns as f64 / 1e3,
        t.p99_ns as f64 / 1e3,
        t.max_ns as f64 / 1e3,
        t.events_per_sec
    ));
    if !s.scenarios.is_empty() {
        out.push_str("scenario                     attack-events  detected  prevented  false-positives\n");
        for o in &s.scenarios {
            out.push_str(&format!(
                "{:<28} {:>13}  {:<8}  {:<9}  {}\n",
                o.scenario.as_str(),
                o.attack_events,
                o.detected,
                o.prevented,
                o.false_positives
            ));
        }
    }
    out.push_str(&format!("false positives: {}", s.false_positives));
    for (rule, n) in &s.false_positive_rules {
        out.push_str(&format!(" [{rule}: {n}]"));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::LintErrors(1).exit_code(), 2);
        assert_eq!(CliError::Pipeline(PipelineError::PausedInline).exit_code(), 3);
        assert_eq!(
            CliError::Trace(TraceError::FormatVersionMismatch { found: 2 }).exit_code(),
            4
        );
    }

    #[test]
    fn config_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.yaml");
        let b = dir.path().join("b.yaml");
        std::fs::write(&a, "mode: observe\n").unwrap();
        std::fs::write(&b, "ring_capacity: 64\n").unwrap();
        let flag = resolve_config(Some(&a), Some(b.to_str().unwrap())).unwrap();
        assert_eq!(flag.mode, crate::probe::BufferMode::Observe);
        assert_eq!(flag.ring_capacity, 8192);
        let env = resolve_config(None, Some(b.to_str().unwrap())).unwrap();
        assert_eq!(env.ring_capacity, 64);
        assert_eq!(resolve_config(None, None).unwrap(), EngineConfig::default());
    }

    #[test]
    fn lint_shipped_pack_is_clean() {
        let report = cmd_lint(&[]).unwrap();
        assert_eq!(report.rules, 4);
        assert!(report.diagnostics.is_empty(), "{:?}", report.diagnostics);
    }
}
