//! Event schema and context enrichment.
//!
//! A probe source produces [`RawEvent`]s; the consumer side of the ring buffer
//! turns each one into a fully attributed [`SyscallEvent`] by resolving the
//! cgroup to a container and walking the process table up to the root
//! ancestor.

mod registry;
mod schema;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use registry::{ContainerRegistry, ProcessInfo};
pub use schema::{arg_schema, is_monitored, monitored_syscalls, ArgKind, PID_TARGET_SYSCALLS};

/// Maximum visible length of a kernel task name (`TASK_COMM_LEN` minus the NUL).
pub const COMM_MAX: usize = 15;

/// Syscall ABI maximum argument count.
pub const MAX_ARGS: usize = 6;

/// Name used for syscalls captured outside the monitored set.
pub const OTHER_SYSCALL: &str = "other";

/// One argument of an intercepted syscall.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SyscallArg {
    /// Absolute path, or a relative one spelled with a leading `./` or `../`.
    Path(String),
    /// argv-style string vector.
    StringList(Vec<String>),
    Int(i64),
    Fd(i32),
    Flags(u64),
    Opaque(#[serde(with = "hex_bytes")] Vec<u8>),
}

impl SyscallArg {
    pub fn kind(&self) -> ArgKind {
        match self {
            SyscallArg::Path(_) => ArgKind::Path,
            SyscallArg::StringList(_) => ArgKind::StringList,
            SyscallArg::Int(_) => ArgKind::Int,
            SyscallArg::Fd(_) => ArgKind::Fd,
            SyscallArg::Flags(_) => ArgKind::Flags,
            SyscallArg::Opaque(_) => ArgKind::Opaque,
        }
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(text).map_err(serde::de::Error::custom)
    }
}

/// Pre-enrichment record as captured by a probe.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawEvent {
    pub seq: u64,
    pub timestamp_ns: u64,
    pub syscall: String,
    #[serde(default)]
    pub args: Vec<SyscallArg>,
    pub pid: u32,
    pub tid: u32,
    pub uid: u32,
    pub cgroup_id: u64,
    pub comm: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("event {seq}: empty syscall name")]
    EmptySyscall { seq: u64 },
    #[error("event {seq}: syscall `{name}` is not monitored (use `other`)")]
    UnmonitoredSyscall { seq: u64, name: String },
    #[error("event {seq}: {count} args exceeds the ABI maximum of {MAX_ARGS}")]
    TooManyArgs { seq: u64, count: usize },
    #[error("event {seq}: execve must carry exactly one path and one string_list arg")]
    MalformedExecve { seq: u64 },
    #[error("event {seq}: path `{path}` is neither absolute nor explicitly relative")]
    AmbiguousPath { seq: u64, path: String },
    #[error("event {seq}: comm `{comm}` longer than {COMM_MAX} bytes")]
    CommTooLong { seq: u64, comm: String },
}

impl RawEvent {
    /// First path argument, if any.
    pub fn path(&self) -> Option<&str> {
        self.args.iter().find_map(|a| match a {
            SyscallArg::Path(p) => Some(p.as_str()),
            _ => None,
        })
    }

    /// First string-list argument (argv), if any.
    pub fn argv(&self) -> Option<&[String]> {
        self.args.iter().find_map(|a| match a {
            SyscallArg::StringList(v) => Some(v.as_slice()),
            _ => None,
        })
    }

    /// Pid targeted by a kill/ptrace-class syscall: its first integer argument.
    pub fn target_pid(&self) -> Option<u32> {
        if !PID_TARGET_SYSCALLS.contains(&self.syscall.as_str()) {
            return None;
        }
        self.args.iter().find_map(|a| match a {
            SyscallArg::Int(v) => u32::try_from(*v).ok(),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<(), EventError> {
        let seq = self.seq;
        if self.syscall.is_empty() {
            return Err(EventError::EmptySyscall { seq });
        }
        if self.syscall != OTHER_SYSCALL && !is_monitored(&self.syscall) {
            return Err(EventError::UnmonitoredSyscall {
                seq,
                name: self.syscall.clone(),
            });
        }
        if self.args.len() > MAX_ARGS {
            return Err(EventError::TooManyArgs {
                seq,
                count: self.args.len(),
            });
        }
        if self.syscall == "execve" {
            let paths = self.args.iter().filter(|a| a.kind() == ArgKind::Path).count();
            let lists = self.args.iter().filter(|a| a.kind() == ArgKind::StringList).count();
            if paths != 1 || lists != 1 {
                return Err(EventError::MalformedExecve { seq });
            }
        }
        for arg in &self.args {
            if let SyscallArg::Path(p) = arg {
                if !path_is_marked(p) {
                    return Err(EventError::AmbiguousPath { seq, path: p.clone() });
                }
            }
        }
        if self.comm.len() > COMM_MAX {
            return Err(EventError::CommTooLong {
                seq,
                comm: self.comm.clone(),
            });
        }
        Ok(())
    }
}

fn path_is_marked(p: &str) -> bool {
    p.starts_with('/') || p.starts_with("./") || p.starts_with("../")
}

/// Truncates a command name the way the kernel does when filling `task->comm`.
pub fn truncate_comm(name: &str) -> String {
    let mut end = name.len().min(COMM_MAX);
    while !name.is_char_boundary(end) {
        end -= 1;
    }
    name[..end].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamespaceKind {
    Mnt,
    Pid,
    Net,
    Ipc,
    Uts,
    User,
    Cgroup,
}

/// Container attribution of an event. `container_id == None` is the host.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContainerContext {
    pub container_id: Option<String>,
    #[serde(default)]
    pub image: String,
    #[serde(default)]
    pub pod: Option<String>,
    // Carried for attribution; no policy field matches on these.
    #[serde(default)]
    pub namespace_ids: BTreeSet<(NamespaceKind, u64)>,
}

impl ContainerContext {
    pub fn host() -> Self {
        ContainerContext {
            container_id: None,
            image: String::new(),
            pod: None,
            namespace_ids: BTreeSet::new(),
        }
    }

    pub fn container(id: impl Into<String>, image: impl Into<String>) -> Self {
        ContainerContext {
            container_id: Some(id.into()),
            image: image.into(),
            pod: None,
            namespace_ids: BTreeSet::new(),
        }
    }

    pub fn with_pod(mut self, pod: impl Into<String>) -> Self {
        self.pod = Some(pod.into());
        self
    }

    pub fn is_host(&self) -> bool {
        self.container_id.is_none()
    }

    /// A host context never carries a pod.
    pub fn is_consistent(&self) -> bool {
        self.container_id.is_some() || self.pod.is_none()
    }
}

impl fmt::Display for ContainerContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.container_id {
            Some(id) => f.write_str(id),
            None => f.write_str("<host>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineageEntry {
    pub pid: u32,
    pub comm: String,
    pub exe: Option<String>,
}

/// Ancestry of the event's process, nearest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProcessLineage {
    pub chain: Vec<LineageEntry>,
    /// False when the pid was missing from the process table; the chain then
    /// holds only what the raw event itself carried.
    pub resolved: bool,
}

impl ProcessLineage {
    pub fn contains(&self, pid: u32) -> bool {
        self.chain.iter().any(|e| e.pid == pid)
    }
}

/// A fully attributed event, ready for policy matching.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyscallEvent {
    pub raw: RawEvent,
    pub container: ContainerContext,
    pub lineage: ProcessLineage,
    pub target_pid_owner: Option<u32>,
}

impl SyscallEvent {
    pub fn seq(&self) -> u64 {
        self.raw.seq
    }

    pub fn syscall(&self) -> &str {
        &self.raw.syscall
    }
}

/// Resolves container, lineage and target ownership for a raw event.
///
/// This is a pure function of its inputs. A pid missing from the process table
/// does not fail; the returned lineage is marked unresolved and the caller is
/// expected to count it (see [`Enricher`]).
pub fn enrich_event(raw: RawEvent, registry: &ContainerRegistry) -> SyscallEvent {
    let container = registry.container_for(raw.cgroup_id);
    let lineage = match registry.lineage(raw.pid) {
        Some(chain) => ProcessLineage { chain, resolved: true },
        None => ProcessLineage {
            chain: vec![LineageEntry {
                pid: raw.pid,
                comm: raw.comm.clone(),
                exe: None,
            }],
            resolved: false,
        },
    };
    let target_pid_owner = raw.target_pid().and_then(|pid| registry.process(pid)).map(|p| p.uid);
    SyscallEvent {
        raw,
        container,
        lineage,
        target_pid_owner,
    }
}

/// Stateful wrapper around [`enrich_event`] that counts enrichment warnings.
#[derive(Debug, Default)]
pub struct Enricher {
    warnings: u64,
}

impl Enricher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enrich(&mut self, raw: RawEvent, registry: &ContainerRegistry) -> SyscallEvent {
        let event = enrich_event(raw, registry);
        if !event.lineage.resolved {
            self.warnings += 1;
        }
        event
    }

    pub fn warnings(&self) -> u64 {
        self.warnings
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(seq: u64, syscall: &str, args: Vec<SyscallArg>, pid: u32, uid: u32, cgroup: u64) -> RawEvent {
        RawEvent {
            seq,
            timestamp_ns: seq * 1000,
            syscall: syscall.into(),
            args,
            pid,
            tid: pid,
            uid,
            cgroup_id: cgroup,
            comm: "test".into(),
        }
    }

    fn registry() -> ContainerRegistry {
        let mut r = ContainerRegistry::new();
        r.insert_container(7, ContainerContext::container("web-1", "node:18").with_pod("web"));
        r.insert_process(ProcessInfo::new(1, 0, "init", "/sbin/init", 0));
        r.insert_process(ProcessInfo::new(100, 1, "node", "/usr/bin/node", 1000));
        r.insert_process(ProcessInfo::new(200, 1, "sshd", "/usr/sbin/sshd", 0));
        r
    }

    #[test]
    fn container_resolved_from_cgroup() {
        let e = enrich_event(
            raw(0, "open", vec![SyscallArg::Path("/etc/hosts".into())], 100, 1000, 7),
            &registry(),
        );
        assert_eq!(e.container.container_id.as_deref(), Some("web-1"));
        assert_eq!(e.lineage.chain.len(), 2);
        assert_eq!(e.lineage.chain[0].pid, 100);
        assert_eq!(e.lineage.chain[1].comm, "init");
        assert!(e.lineage.resolved);
    }

    #[test]
    fn ptrace_target_owner() {
        let e = enrich_event(raw(0, "ptrace", vec![SyscallArg::Int(200)], 100, 1000, 7), &registry());
        assert_eq!(e.target_pid_owner, Some(0));
    }

    #[test]
    fn ptrace_request_before_pid_is_skipped() {
        let e = enrich_event(
            raw(
                0,
                "ptrace",
                vec![SyscallArg::Flags(16), SyscallArg::Int(100)],
                200,
                0,
                0,
            ),
            &registry(),
        );
        assert_eq!(e.target_pid_owner, Some(1000));
    }

    #[test]
    fn target_owner_only_for_pid_syscalls() {
        let e = enrich_event(raw(0, "setuid", vec![SyscallArg::Int(200)], 100, 1000, 7), &registry());
        assert_eq!(e.target_pid_owner, None);
    }

    #[test]
    fn unknown_cgroup_is_host() {
        let e = enrich_event(raw(0, "open", vec![], 100, 1000, 999), &registry());
        assert!(e.container.is_host());
        assert_eq!(e.container.pod, None);
    }

    #[test]
    fn unknown_pid_is_counted_not_dropped() {
        let mut enricher = Enricher::new();
        let e = enricher.enrich(raw(3, "open", vec![], 4242, 0, 7), &registry());
        assert!(!e.lineage.resolved);
        assert_eq!(e.lineage.chain[0].pid, 4242);
        assert_eq!(e.seq(), 3);
        assert_eq!(enricher.warnings(), 1);
    }

    #[test]
    fn enrichment_is_repeatable() {
        let reg = registry();
        let r = raw(9, "ptrace", vec![SyscallArg::Int(200)], 100, 1000, 7);
        let first = serde_json::to_string(&enrich_event(r.clone(), &reg)).unwrap();
        for _ in 0..10 {
            assert_eq!(serde_json::to_string(&enrich_event(r.clone(), &reg)).unwrap(), first);
        }
    }

    #[test]
    fn validation_rules() {
        let ok = raw(
            0,
            "execve",
            vec![
                SyscallArg::Path("/bin/ls".into()),
                SyscallArg::StringList(vec!["ls".into()]),
            ],
            1,
            0,
            0,
        );
        assert!(ok.validate().is_ok());

        let bad_exec = raw(0, "execve", vec![SyscallArg::Path("/bin/ls".into())], 1, 0, 0);
        assert!(matches!(bad_exec.validate(), Err(EventError::MalformedExecve { .. })));

        let many = raw(0, "open", vec![SyscallArg::Int(0); 7], 1, 0, 0);
        assert!(matches!(many.validate(), Err(EventError::TooManyArgs { .. })));

        let relative = raw(0, "open", vec![SyscallArg::Path("etc/passwd".into())], 1, 0, 0);
        assert!(matches!(relative.validate(), Err(EventError::AmbiguousPath { .. })));

        let marked = raw(0, "open", vec![SyscallArg::Path("./exploit".into())], 1, 0, 0);
        assert!(marked.validate().is_ok());

        assert!(raw(0, "getpid", vec![], 1, 0, 0).validate().is_err());
        assert!(raw(0, OTHER_SYSCALL, vec![], 1, 0, 0).validate().is_ok());
        assert!(raw(0, "", vec![], 1, 0, 0).validate().is_err());
    }

    #[test]
    fn comm_truncation() {
        assert_eq!(truncate_comm("kworker/u16:3-events_unbound"), "kworker/u16:3-e");
        assert_eq!(truncate_comm("bash"), "bash");
        assert_eq!(truncate_comm("ééééééééé").len(), 14);
    }

    #[test]
    fn opaque_args_serialize_as_hex() {
        let arg = SyscallArg::Opaque(vec![0x41, 0x00, 0xff]);
        let json = serde_json::to_string(&arg).unwrap();
        assert_eq!(json, r#"{"kind":"opaque","value":"4100ff"}"#);
        let back: SyscallArg = serde_json::from_str(&json).unwrap();
        assert_eq!(back, arg);
    }
}
