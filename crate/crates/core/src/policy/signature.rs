use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::event::{SyscallArg, SyscallEvent};

pub type SignatureFn = dyn Fn(&SyscallEvent) -> bool + Send + Sync;

/// Exploit-signature predicates backing `argv.suspicious`, keyed by syscall.
#[derive(Clone)]
pub struct SignatureRegistry {
    by_syscall: BTreeMap<String, (String, Arc<SignatureFn>)>,
}

impl SignatureRegistry {
    pub fn empty() -> Self {
        SignatureRegistry {
            by_syscall: BTreeMap::new(),
        }
    }

    /// Replaces any predicate already registered for `syscall`.
    pub fn register<F>(&mut self, syscall: &str, name: &str, predicate: F)
    where
        F: Fn(&SyscallEvent) -> bool + Send + Sync + 'static,
    {
        self.by_syscall
            .insert(syscall.to_string(), (name.to_string(), Arc::new(predicate)));
    }

    pub fn covers(&self, syscall: &str) -> bool {
        self.by_syscall.contains_key(syscall)
    }

    pub fn name_for(&self, syscall: &str) -> Option<&str> {
        self.by_syscall.get(syscall).map(|(n, _)| n.as_str())
    }

    /// False for syscalls with no registered signature.
    pub fn is_suspicious(&self, event: &SyscallEvent) -> bool {
        self.by_syscall.get(event.syscall()).is_some_and(|(_, f)| f(event))
    }
}

impl Default for SignatureRegistry {
    fn default() -> Self {
        let mut r = SignatureRegistry::empty();
        r.register("fsconfig", "fsconfig-param-overflow", fsconfig_overflow_signature);
        r
    }
}

impl fmt::Debug for SignatureRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.by_syscall.iter().map(|(k, (n, _))| (k, n)))
            .finish()
    }
}

/// Longest accepted fsconfig key/value payload.
pub const FSCONFIG_ARG_LIMIT: usize = 4096;

/// Shortest run of one repeated byte treated as heap-spray filler.
pub const FILLER_RUN: usize = 512;

/// Payload shape of the legacy fsconfig parameter overflow (CVE-2022-0185):
/// oversized string parameters, long runs of filler bytes, or NULs embedded
/// ahead of further data.
pub fn fsconfig_overflow_signature(event: &SyscallEvent) -> bool {
    event.raw.args.iter().any(|arg| match arg {
        SyscallArg::Opaque(bytes) => {
            bytes.len() > FSCONFIG_ARG_LIMIT || longest_run(bytes) >= FILLER_RUN || has_embedded_nul(bytes)
        }
        _ => false,
    })
}

fn longest_run(bytes: &[u8]) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut prev = None;
    for &b in bytes {
        if Some(b) == prev {
            run += 1;
        } else {
            run = 1;
            prev = Some(b);
        }
        best = best.max(run);
    }
    best
}

fn has_embedded_nul(bytes: &[u8]) -> bool {
    match bytes.iter().position(|b| *b == 0) {
        Some(i) => bytes[i..].iter().any(|b| *b != 0),
        None => false,
    }
}
