//! Replayable traces, stored as JSON lines: one header object followed by one
//! [`RawEvent`] per line.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{ContainerRegistry, RawEvent};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ReverseShellBash,
    ReverseShellNc,
    SensitiveFileRead,
    ContainerEscapeFsconfig,
    PtraceAbuse,
    FilelessExecution,
    BenignAdminScript,
    BenignBackground,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::ReverseShellBash,
        ScenarioKind::ReverseShellNc,
        ScenarioKind::SensitiveFileRead,
        ScenarioKind::ContainerEscapeFsconfig,
        ScenarioKind::PtraceAbuse,
        ScenarioKind::FilelessExecution,
        ScenarioKind::BenignAdminScript,
        ScenarioKind::BenignBackground,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::ReverseShellBash => "reverse_shell_bash",
            ScenarioKind::ReverseShellNc => "reverse_shell_nc",
            ScenarioKind::SensitiveFileRead => "sensitive_file_read",
            ScenarioKind::ContainerEscapeFsconfig => "container_escape_fsconfig",
            ScenarioKind::PtraceAbuse => "ptrace_abuse",
            ScenarioKind::FilelessExecution => "fileless_execution",
            ScenarioKind::BenignAdminScript => "benign_admin_script",
            ScenarioKind::BenignBackground => "benign_background",
        }
    }

    pub fn is_attack(self) -> bool {
        !matches!(self, ScenarioKind::BenignAdminScript | ScenarioKind::BenignBackground)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// Ground-truth annotation for one event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioLabel {
    pub scenario: ScenarioKind,
    pub step: String,
    /// Part of the malicious activity (as opposed to benign behavior).
    pub attack: bool,
    /// The step that characterises the scenario.
    #[serde(default)]
    pub signature: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub registry: ContainerRegistry,
    pub events: Vec<RawEvent>,
    pub labels: BTreeMap<u64, ScenarioLabel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    registry: ContainerRegistry,
    #[serde(default)]
    labels: BTreeMap<u64, ScenarioLabel>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace format version {found} is not supported (expected {TRACE_FORMAT_VERSION})")]
    FormatVersionMismatch { found: u64 },
    #[error("trace line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
}

fn schema(line: usize, message: impl fmt::Display) -> TraceError {
    TraceError::Schema {
        line,
        message: message.to_string(),
    }
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn label(&self, seq: u64) -> Option<&ScenarioLabel> {
        self.labels.get(&seq)
    }

    /// Checks seq contiguity, label coverage and per-event invariants.
    pub fn validate(&self) -> Result<(), TraceError> {
        for (i, ev) in self.events.iter().enumerate() {
            let line = i + 2;
            if ev.seq != i as u64 {
                return Err(schema(line, format!("expected seq {i}, found {}", ev.seq)));
            }
            ev.validate().map_err(|e| schema(line, e))?;
        }
        if let Some((seq, _)) = self.labels.iter().find(|(s, _)| **s >= self.events.len() as u64) {
            return Err(schema(1, format!("label for missing seq {seq}")));
        }
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        std::fs::write(path, save_trace(self))?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
        load_trace(&std::fs::read(path)?)
    }
}

pub fn save_trace(trace: &Trace) -> Vec<u8> {
    let header = Header {
        version: TRACE_FORMAT_VERSION,
        registry: trace.registry.clone(),
        labels: trace.labels.clone(),
    };
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for ev in &trace.events {
        serde_json::to_writer(&mut out, ev).expect("event serializes");
        out.push(b'\n');
    }
    out.flush().ok();
    out
}

pub fn load_trace(bytes: &[u8]) -> Result<Trace, TraceError> {
    let text = std::str::from_utf8(bytes).map_err(|e| schema(1, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(schema(1, "missing header"));
    };
    let raw_header: serde_json::Value = serde_json::from_str(first).map_err(|e| schema(1, e))?;
    match raw_header.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == TRACE_FORMAT_VERSION as u64 => {}
        Some(found) => return Err(TraceError::FormatVersionMismatch { found }),
        None => return Err(schema(1, "header has no numeric `version`")),
    }
    let header: Header = serde_json::from_value(raw_header).map_err(|e| schema(1, e))?;
    let mut events = Vec::new();
    for (idx, line) in lines {
        let ev: RawEvent = serde_json::from_str(line).map_err(|e| schema(idx + 1, e))?;
        events.push(ev);
    }
    let trace = Trace {
        registry: header.registry,
        events,
        labels: header.labels,
    };
    trace.validate()?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::SyscallArg;

    const FIXTURE: &str = r#"{"version":1,"registry":{"containers":{"7":{"container_id":"web-1","image":"node:18","pod":"web","namespace_ids":[["pid",4026532201]]}},"processes":{"100":{"pid":100,"ppid":1,"comm":"node","exe":"/usr/bin/node","uid":1000}}},"labels":{"2":{"scenario":"sensitive_file_read","step":"read-shadow","attack":true,"signature":true}}}
{"seq":0,"timestamp_ns":1000,"syscall":"openat","args":[{"kind":"fd","value":-100},{"kind":"path","value":"/etc/hosts"},{"kind":"flags","value":0}],"pid":100,"tid":100,"uid":1000,"cgroup_id":7,"comm":"node"}
{"seq":1,"timestamp_ns":2500,"syscall":"connect","args":[{"kind":"fd","value":5},{"kind":"opaque","value":"31302e312e302e343a35343332"}],"pid":100,"tid":101,"uid":1000,"cgroup_id":7,"comm":"node"}
{"seq":2,"timestamp_ns":4000,"syscall":"open","args":[{"kind":"path","value":"/etc/shadow"},{"kind":"flags","value":0}],"pid":100,"tid":100,"uid":1000,"cgroup_id":7,"comm":"node"}
"#;

    #[test]
    fn hand_written_fixture() {
        let t = load_trace(FIXTURE.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        let seqs: Vec<u64> = t.events.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2]);

        let e0 = &t.events[0];
        assert_eq!(e0.timestamp_ns, 1000);
        assert_eq!(e0.syscall, "openat");
        assert_eq!(
            e0.args,
            vec![
                SyscallArg::Fd(-100),
                SyscallArg::Path("/etc/hosts".into()),
                SyscallArg::Flags(0)
            ]
        );
        assert_eq!((e0.pid, e0.tid, e0.uid, e0.cgroup_id), (100, 100, 1000, 7));
        assert_eq!(e0.comm, "node");

        let e1 = &t.events[1];
        assert_eq!(e1.tid, 101);
        assert_eq!(e1.args[1], SyscallArg::Opaque(b"10.1.0.4:5432".to_vec()));

        assert_eq!(t.events[2].path(), Some("/etc/shadow"));
        let label = t.label(2).unwrap();
        assert_eq!(label.scenario, ScenarioKind::SensitiveFileRead);
        assert!(label.attack && label.signature);

        let ctx = t.registry.container_for(7);
        assert_eq!(ctx.container_id.as_deref(), Some("web-1"));
        assert_eq!(ctx.namespace_ids.len(), 1);
        assert_eq!(t.registry.process(100).unwrap().uid, 1000);
    }

    #[test]
    fn save_then_load() {
        let t = load_trace(FIXTURE.as_bytes()).unwrap();
        assert_eq!(load_trace(&save_trace(&t)).unwrap(), t);
    }

    #[test]
    fn unknown_version() {
        let bad = FIXTURE.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(
            load_trace(bad.as_bytes()),
            Err(TraceError::FormatVersionMismatch { found: 9 })
        ));
    }

    #[test]
    fn schema_errors_report_lines() {
        let bad = FIXTURE.replace("\"seq\":1,", "\"seq\":5,");
        assert!(matches!(
            load_trace(bad.as_bytes()),
            Err(TraceError::Schema { line: 3, .. })
        ));

        let bad = FIXTURE.replace("\"syscall\":\"connect\",", "");
        assert!(matches!(
            load_trace(bad.as_bytes()),
            Err(TraceError::Schema { line: 3, .. })
        ));

        let bad = FIXTURE.replace("\"labels\":{\"2\"", "\"labels\":{\"12\"");
        assert!(matches!(
            load_trace(bad.as_bytes()),
            Err(TraceError::Schema { line: 1, .. })
        ));

        assert!(matches!(load_trace(b""), Err(TraceError::Schema { line: 1, .. })));
    }

    #[test]
    fn scenario_names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.as_str().parse::<ScenarioKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
    }
}
