//! Turns decisions into effects: verdicts for inline syscalls, simulated
//! kills, alert emission and audit records.

mod procs;
mod sink;
mod verdict;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use procs::{ExecEntry, KillEntry, ProcState, SimProcessTable};
pub use sink::{argv_summary, AlertRecord, AlertSink, AlertSinks, FileSink, MemorySink, NoopSiemSink};
pub use verdict::{FailPolicy, Verdict, VerdictError, VerdictOutcome, VerdictTable, DEFAULT_WATCHDOG, EACCES, ESRCH};

use crate::analyzer::DeviationFlag;
use crate::event::SyscallEvent;
use crate::policy::{Decision, Verdict as Class};
use crate::probe::BufferMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionTaken {
    Allowed,
    Denied,
    Killed,
    Alerted,
    Logged,
}

impl ActionTaken {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionTaken::Allowed => "allowed",
            ActionTaken::Denied => "denied",
            ActionTaken::Killed => "killed",
            ActionTaken::Alerted => "alerted",
            ActionTaken::Logged => "logged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnforcementRecord {
    pub event_seq: u64,
    pub pid: u32,
    pub action_taken: ActionTaken,
    pub rule_name: Option<String>,
    /// False for deny/kill in observe mode, where they are recorded only.
    pub enforced: bool,
    pub timestamp_ns: u64,
    pub latency_ns: u64,
}

#[derive(Debug, Error)]
pub enum EnforceError {
    #[error(transparent)]
    Verdict(#[from] VerdictError),
    #[error("alert sink: {0}")]
    Sink(#[from] std::io::Error),
}

/// Consumer-side enforcement state.
pub struct Enforcer {
    mode: BufferMode,
    table: Arc<VerdictTable>,
    procs: SimProcessTable,
    sinks: AlertSinks,
    audit_records: u64,
    suppressed: u64,
}

impl Enforcer {
    pub fn new(mode: BufferMode, table: Arc<VerdictTable>, sinks: AlertSinks) -> Self {
        Enforcer {
            mode,
            table,
            procs: SimProcessTable::new(),
            sinks,
            audit_records: 0,
            suppressed: 0,
        }
    }

    pub fn mode(&self) -> BufferMode {
        self.mode
    }

    pub fn procs(&self) -> &SimProcessTable {
        &self.procs
    }

    pub fn alerts_emitted(&self) -> u64 {
        self.sinks.emitted()
    }

    pub fn audit_records(&self) -> u64 {
        self.audit_records
    }

    pub fn suppressed(&self) -> u64 {
        self.suppressed
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.sinks.flush()
    }

    /// Registers the event with the process table. Returns true when the
    /// event belongs to a process that enforcement already silenced; such an
    /// event is settled with `ESRCH` (inline) and produces no record.
    pub fn screen(&mut self, event: &SyscallEvent) -> Result<bool, EnforceError> {
        self.procs.observe(event.raw.pid, event.seq());
        if !self.procs.is_suppressed(event) {
            return Ok(false);
        }
        self.suppressed += 1;
        if self.mode == BufferMode::Inline {
            self.table.settle(Verdict::errno(event.seq(), ESRCH, None))?;
        }
        Ok(true)
    }

    pub fn apply(
        &mut self,
        decision: &Decision,
        event: &SyscallEvent,
        popped_at: Instant,
    ) -> Result<EnforcementRecord, EnforceError> {
        let seq = event.seq();
        let inline = self.mode == BufferMode::Inline;
        let rule = decision.rule_name.clone();
        let blocking = matches!(decision.verdict, Class::Deny | Class::Kill);
        let outcome = if inline && blocking {
            VerdictOutcome::Errno(EACCES)
        } else {
            VerdictOutcome::Allow
        };
        if inline {
            self.table.settle(Verdict {
                event_seq: seq,
                outcome,
                rule_name: rule.clone(),
            })?;
        }
        let latency_ns = popped_at.elapsed().as_nanos() as u64;

        let action_taken = match decision.verdict {
            Class::Allow => ActionTaken::Allowed,
            Class::Deny => ActionTaken::Denied,
            Class::Kill => ActionTaken::Killed,
            Class::Alert => ActionTaken::Alerted,
            Class::Log => ActionTaken::Logged,
        };
        if inline {
            match decision.verdict {
                Class::Kill => {
                    self.procs.kill(event.raw.pid, seq, rule.clone());
                }
                Class::Deny if event.syscall() == "execve" => self.procs.refuse_exec(event.raw.pid, seq),
                _ => {}
            }
        }
        if event.syscall() == "execve" && outcome == VerdictOutcome::Allow {
            if let Some(exe) = event.raw.path() {
                self.procs.record_exec(seq, event.raw.pid, exe);
            }
        }
        if let Some(rule_name) = &rule {
            let action = match (decision.verdict, inline) {
                (Class::Deny | Class::Kill, false) => format!("would_{}", decision.verdict),
                (v, _) => v.to_string(),
            };
            if decision.verdict == Class::Log {
                self.audit_records += 1;
            }
            self.sinks.emit(&AlertRecord::for_event(event, rule_name, &action))?;
        }
        Ok(EnforcementRecord {
            event_seq: seq,
            pid: event.raw.pid,
            action_taken,
            rule_name: rule,
            enforced: inline || !blocking,
            timestamp_ns: event.raw.timestamp_ns,
            latency_ns,
        })
    }

    /// Behavior flags only ever alert.
    pub fn alert_flags(&mut self, event: &SyscallEvent, flags: &[DeviationFlag]) -> Result<(), EnforceError> {
        for flag in flags {
            let rule = format!("behavior/{}", flag.kind.as_str());
            self.sinks.emit(&AlertRecord::for_event(event, &rule, "alert"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{enrich_event, ContainerRegistry, ProcessInfo, RawEvent, SyscallArg};
    use crate::policy::Field;

    fn exec_event(seq: u64, pid: u32) -> SyscallEvent {
        let mut reg = ContainerRegistry::new();
        reg.insert_process(ProcessInfo::new(pid, 1, "node", "/usr/bin/node", 1000));
        enrich_event(
            RawEvent {
                seq,
                timestamp_ns: 1000 + seq,
                syscall: "execve".into(),
                args: vec![
                    SyscallArg::Path("/bin/bash".into()),
                    SyscallArg::StringList(vec!["bash".into(), "-i".into()]),
                ],
                pid,
                tid: pid,
                uid: 1000,
                cgroup_id: 0,
                comm: "node".into(),
            },
            &reg,
        )
    }

    fn decision(verdict: Class) -> Decision {
        Decision {
            verdict,
            rule_name: (verdict != Class::Allow).then(|| "r".to_string()),
            matched_fields: vec![Field::ArgvContains],
        }
    }

    #[test]
    fn inline_deny_settles_eacces() {
        let table = Arc::new(VerdictTable::default());
        let mem = MemorySink::new();
        let mut enf = Enforcer::new(
            BufferMode::Inline,
            Arc::clone(&table),
            AlertSinks::new().with(mem.clone()),
        );
        table.register(0, true).unwrap();
        let ev = exec_event(0, 50);
        assert!(!enf.screen(&ev).unwrap());
        let rec = enf.apply(&decision(Class::Deny), &ev, Instant::now()).unwrap();
        assert_eq!(rec.action_taken, ActionTaken::Denied);
        assert!(rec.enforced);
        assert_eq!(table.await_verdict(0).outcome, VerdictOutcome::Errno(EACCES));
        assert!(enf.procs().exec_log().is_empty());
        assert_eq!(mem.records()[0].action, "deny");

        // The refused process has nothing more to say.
        table.register(1, false).unwrap();
        assert!(enf.screen(&exec_event(1, 50)).unwrap());
        assert_eq!(enf.suppressed(), 1);
    }

    #[test]
    fn observe_deny_is_record_only() {
        let table = Arc::new(VerdictTable::default());
        let mem = MemorySink::new();
        let mut enf = Enforcer::new(
            BufferMode::Observe,
            Arc::clone(&table),
            AlertSinks::new().with(mem.clone()),
        );
        let ev = exec_event(0, 50);
        enf.screen(&ev).unwrap();
        let rec = enf.apply(&decision(Class::Kill), &ev, Instant::now()).unwrap();
        assert!(!rec.enforced);
        assert_eq!(mem.records()[0].action, "would_kill");
        assert!(enf.procs().kill_log().is_empty());
        assert_eq!(table.settled_count(), 0);
    }

    #[test]
    fn allow_is_silent() {
        let table = Arc::new(VerdictTable::default());
        let mem = MemorySink::new();
        let mut enf = Enforcer::new(
            BufferMode::Inline,
            Arc::clone(&table),
            AlertSinks::new().with(mem.clone()),
        );
        table.register(0, false).unwrap();
        let ev = exec_event(0, 7);
        enf.screen(&ev).unwrap();
        let rec = enf.apply(&Decision::allow(), &ev, Instant::now()).unwrap();
        assert_eq!(rec.action_taken, ActionTaken::Allowed);
        assert!(mem.records().is_empty());
        assert_eq!(enf.procs().exec_log().len(), 1);
    }

    #[test]
    fn kill_marks_pid() {
        let table = Arc::new(VerdictTable::default());
        let mut enf = Enforcer::new(BufferMode::Inline, Arc::clone(&table), AlertSinks::new());
        table.register(0, true).unwrap();
        let ev = exec_event(0, 321);
        enf.screen(&ev).unwrap();
        enf.apply(&decision(Class::Kill), &ev, Instant::now()).unwrap();
        assert!(enf.procs().state(321).unwrap().killed);
        table.register(1, false).unwrap();
        assert!(enf.screen(&exec_event(1, 321)).unwrap());
    }

    #[test]
    fn inline_event_without_slot_is_an_error() {
        let table = Arc::new(VerdictTable::default());
        let mut enf = Enforcer::new(BufferMode::Inline, table, AlertSinks::new());
        let ev = exec_event(0, 1);
        let err = enf.apply(&Decision::allow(), &ev, Instant::now()).unwrap_err();
        assert!(matches!(
            err,
            EnforceError::Verdict(VerdictError::UnsettledSlotMissing { seq: 0 })
        ));
    }
}
