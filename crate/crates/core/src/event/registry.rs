use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{truncate_comm, ContainerContext, LineageEntry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessInfo {
    pub pid: u32,
    pub ppid: u32,
    pub comm: String,
    pub exe: String,
    pub uid: u32,
}

impl ProcessInfo {
    pub fn new(pid: u32, ppid: u32, comm: &str, exe: &str, uid: u32) -> Self {
        ProcessInfo {
            pid,
            ppid,
            comm: truncate_comm(comm),
            exe: exe.to_string(),
            uid,
        }
    }
}

/// Stand-in for the kernel's cgroup and procfs views.
///
/// Mutation goes through `&mut self`, so readers sharing a snapshot never
/// observe a half-applied update.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerRegistry {
    #[serde(default)]
    containers: BTreeMap<u64, ContainerContext>,
    #[serde(default)]
    processes: BTreeMap<u32, ProcessInfo>,
}

impl ContainerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_container(&mut self, cgroup_id: u64, ctx: ContainerContext) {
        self.containers.insert(cgroup_id, ctx);
    }

    pub fn insert_process(&mut self, info: ProcessInfo) {
        self.processes.insert(info.pid, info);
    }

    /// Unknown cgroups resolve to the host context.
    pub fn container_for(&self, cgroup_id: u64) -> ContainerContext {
        self.containers
            .get(&cgroup_id)
            .cloned()
            .unwrap_or_else(ContainerContext::host)
    }

    pub fn process(&self, pid: u32) -> Option<&ProcessInfo> {
        self.processes.get(&pid)
    }

    pub fn processes(&self) -> impl Iterator<Item = &ProcessInfo> {
        self.processes.values()
    }

    pub fn containers(&self) -> impl Iterator<Item = (u64, &ContainerContext)> {
        self.containers.iter().map(|(k, v)| (*k, v))
    }

    /// Walks `pid` up to its root ancestor. `None` if `pid` itself is unknown.
    /// The walk stops at a missing parent or at the first repeated pid.
    pub fn lineage(&self, pid: u32) -> Option<Vec<LineageEntry>> {
        let mut info = self.processes.get(&pid)?;
        let mut seen = BTreeSet::new();
        let mut chain = Vec::new();
        loop {
            seen.insert(info.pid);
            chain.push(LineageEntry {
                pid: info.pid,
                comm: info.comm.clone(),
                exe: Some(info.exe.clone()),
            });
            if info.ppid == info.pid || seen.contains(&info.ppid) {
                break;
            }
            match self.processes.get(&info.ppid) {
                Some(parent) => info = parent,
                None => break,
            }
        }
        Some(chain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lineage_stops_on_cycle() {
        let mut r = ContainerRegistry::new();
        r.insert_process(ProcessInfo::new(10, 11, "a", "/a", 0));
        r.insert_process(ProcessInfo::new(11, 10, "b", "/b", 0));
        let chain = r.lineage(10).unwrap();
        let pids: Vec<u32> = chain.iter().map(|e| e.pid).collect();
        assert_eq!(pids, vec![10, 11]);
    }

    #[test]
    fn lineage_of_unknown_pid() {
        assert!(ContainerRegistry::new().lineage(5).is_none());
    }

    #[test]
    fn process_comm_is_truncated() {
        let p = ProcessInfo::new(1, 0, "a-very-long-command-name", "/x", 0);
        assert_eq!(p.comm.len(), 15);
    }
}
