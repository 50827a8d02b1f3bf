use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::event::SyscallEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcState {
    pub alive: bool,
    pub killed: bool,
    pub first_seen: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KillEntry {
    pub seq: u64,
    pub pid: u32,
    pub rule: Option<String>,
    /// The pid was already dead; nothing happened.
    pub noop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecEntry {
    pub seq: u64,
    pub pid: u32,
    pub exe: String,
}

/// Simulated view of process liveness, driven by enforcement.
///
/// A pid is silenced from a given seq on when it is killed or its exec is
/// refused. Processes that first appear after that seq and descend from it
/// are silenced as well.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimProcessTable {
    procs: BTreeMap<u32, ProcState>,
    silenced: BTreeMap<u32, u64>,
    kill_log: Vec<KillEntry>,
    exec_log: Vec<ExecEntry>,
}

impl SimProcessTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records that `pid` produced an event at `seq`.
    pub fn observe(&mut self, pid: u32, seq: u64) {
        self.procs.entry(pid).or_insert(ProcState {
            alive: true,
            killed: false,
            first_seen: seq,
        });
    }

    pub fn state(&self, pid: u32) -> Option<ProcState> {
        self.procs.get(&pid).copied()
    }

    pub fn is_alive(&self, pid: u32) -> bool {
        self.procs.get(&pid).is_some_and(|p| p.alive)
    }

    pub fn kill(&mut self, pid: u32, seq: u64, rule: Option<String>) -> bool {
        let state = self.procs.entry(pid).or_insert(ProcState {
            alive: true,
            killed: false,
            first_seen: seq,
        });
        let noop = !state.alive;
        state.alive = false;
        state.killed = true;
        self.kill_log.push(KillEntry { seq, pid, rule, noop });
        self.silenced.entry(pid).or_insert(seq);
        !noop
    }

    /// The process image never replaced itself; nothing it would have done
    /// afterwards happens.
    pub fn refuse_exec(&mut self, pid: u32, seq: u64) {
        if let Some(state) = self.procs.get_mut(&pid) {
            state.alive = false;
        }
        self.silenced.entry(pid).or_insert(seq);
    }

    pub fn record_exec(&mut self, seq: u64, pid: u32, exe: &str) {
        self.exec_log.push(ExecEntry {
            seq,
            pid,
            exe: exe.to_string(),
        });
    }

    /// Whether `event` comes from a silenced process or a later descendant
    /// of one. Call after [`Self::observe`].
    pub fn is_suppressed(&mut self, event: &SyscallEvent) -> bool {
        let pid = event.raw.pid;
        if self.silenced.contains_key(&pid) {
            return true;
        }
        let first_seen = self.procs.get(&pid).map_or(event.seq(), |p| p.first_seen);
        let inherited = event
            .lineage
            .chain
            .iter()
            .skip(1)
            .filter_map(|anc| self.silenced.get(&anc.pid))
            .any(|&since| first_seen > since);
        if inherited {
            self.silenced.insert(pid, first_seen);
            if let Some(state) = self.procs.get_mut(&pid) {
                state.alive = false;
            }
        }
        inherited
    }

    pub fn kill_log(&self) -> &[KillEntry] {
        &self.kill_log
    }

    pub fn exec_log(&self) -> &[ExecEntry] {
        &self.exec_log
    }
}
