//! Attributes a raw event to its container and process lineage.

use patrol::event::{enrich_event, ContainerContext, ContainerRegistry, ProcessInfo, RawEvent, SyscallArg};

fn main() {
    let mut registry = ContainerRegistry::new();
    registry.insert_container(101, ContainerContext::container("web-1", "node:20").with_pod("shop"));
    registry.insert_process(ProcessInfo::new(1, 0, "systemd", "/sbin/init", 0));
    registry.insert_process(ProcessInfo::new(1100, 1, "node", "/usr/bin/node", 1000));
    registry.insert_process(ProcessInfo::new(5000, 1100, "bash", "/bin/bash", 1000));

    let raw = RawEvent {
        seq: 0,
        timestamp_ns: 1_000,
        syscall: "execve".into(),
        args: vec![
            SyscallArg::Path("/bin/bash".into()),
            SyscallArg::StringList(vec!["bash".into(), "-i".into()]),
        ],
        pid: 5000,
        tid: 5000,
        uid: 1000,
        cgroup_id: 101,
        comm: "bash".into(),
    };
    raw.validate().expect("well-formed event");
    let event = enrich_event(raw, &registry);
    println!(
        "container: {} (image {:?}, pod {:?})",
        event.container, event.container.image, event.container.pod
    );
    println!("lineage resolved: {}", event.lineage.resolved);
    for entry in &event.lineage.chain {
        println!("  {} {} {:?}", entry.pid, entry.comm, entry.exe);
    }

    // Unknown pids still enrich; the lineage is marked unresolved.
    let orphan = RawEvent {
        pid: 9999,
        tid: 9999,
        cgroup_id: 7,
        ..event.raw.clone()
    };
    let event = enrich_event(orphan, &registry);
    println!("orphan on {}: resolved {}", event.container, event.lineage.resolved);
}
