use std::collections::BTreeSet;

/// Kind tag of a [`super::SyscallArg`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArgKind {
    Path,
    StringList,
    Int,
    Fd,
    Flags,
    Opaque,
}

/// Syscalls whose first integer argument names a target pid.
pub const PID_TARGET_SYSCALLS: &[&str] = &["ptrace", "kill"];

// Argument layout of every monitored syscall, as the simulated probes capture it.
const SCHEMA: &[(&str, &[ArgKind])] = {
    use ArgKind::*;
    &[
        ("execve", &[Path, StringList]),
        ("open", &[Path, Flags]),
        ("openat", &[Fd, Path, Flags]),
        ("clone", &[Flags]),
        ("ptrace", &[Flags, Int]),
        ("kill", &[Int, Int]),
        ("mount", &[Path, Path, Opaque, Flags, Opaque]),
        ("socket", &[Int, Int, Int]),
        ("connect", &[Fd, Opaque]),
        ("fsconfig", &[Fd, Int, Opaque, Opaque, Int]),
        ("setuid", &[Int]),
        ("capset", &[Opaque, Opaque]),
        ("unshare", &[Flags]),
    ]
};

/// The critical syscalls the probes intercept. Everything else is either
/// ignored or reported as `other`.
pub fn monitored_syscalls() -> BTreeSet<&'static str> {
    SCHEMA.iter().map(|(name, _)| *name).collect()
}

pub fn is_monitored(name: &str) -> bool {
    SCHEMA.iter().any(|(n, _)| *n == name)
}

pub fn arg_schema(name: &str) -> Option<&'static [ArgKind]> {
    SCHEMA.iter().find(|(n, _)| *n == name).map(|(_, a)| *a)
}
