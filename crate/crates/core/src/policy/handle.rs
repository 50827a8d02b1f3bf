use std::sync::Arc;

use parking_lot::RwLock;

use super::{compile, CompileError, CompiledPolicySet, PolicySet};

/// Shared, atomically swappable reference to the active policy set.
///
/// Readers capture an `Arc` once per event and match against that snapshot,
/// so a concurrent reload never yields a decision mixing two versions.
#[derive(Debug)]
pub struct PolicyHandle {
    current: RwLock<Arc<CompiledPolicySet>>,
}

impl PolicyHandle {
    pub fn new(compiled: CompiledPolicySet) -> Self {
        PolicyHandle {
            current: RwLock::new(Arc::new(compiled)),
        }
    }

    pub fn from_policies(policies: &PolicySet) -> Result<Self, CompileError> {
        Ok(Self::new(compile(policies)?))
    }

    pub fn load(&self) -> Arc<CompiledPolicySet> {
        Arc::clone(&self.current.read())
    }

    pub fn version(&self) -> u64 {
        self.current.read().version()
    }

    /// Compiles and publishes `new`, returning the new version. On error the
    /// active set is left untouched.
    pub fn reload(&self, new: &PolicySet) -> Result<u64, CompileError> {
        let mut guard = self.current.write();
        let next = guard.reload(new)?;
        let version = next.version();
        *guard = Arc::new(next);
        Ok(version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::pack;
    use std::thread;

    #[test]
    fn reload_publishes_new_version() {
        let handle = PolicyHandle::from_policies(&pack::default_pack()).unwrap();
        let before = handle.load();
        assert_eq!(handle.reload(&pack::adjusted_pack()).unwrap(), 2);
        assert_eq!(before.version(), 1);
        assert_eq!(handle.load().version(), 2);
    }

    #[test]
    fn failed_reload_keeps_old_set() {
        let handle = PolicyHandle::from_policies(&pack::default_pack()).unwrap();
        let mut broken = pack::default_pack();
        broken.rules[1].clause = Default::default();
        assert!(handle.reload(&broken).is_err());
        assert_eq!(handle.version(), 1);
        assert_eq!(handle.load().rule_count(), 4);
    }

    #[test]
    fn concurrent_readers_see_whole_versions() {
        let handle = Arc::new(PolicyHandle::from_policies(&pack::default_pack()).unwrap());
        let reader = {
            let handle = Arc::clone(&handle);
            thread::spawn(move || {
                let mut last = 0;
                for _ in 0..10_000 {
                    let snap = handle.load();
                    // v1 carries the ptrace rule, every later version drops it.
                    let has_ptrace = !snap.rules_for("ptrace").is_empty();
                    assert_eq!(has_ptrace, snap.version() == 1);
                    assert!(snap.version() >= last);
                    last = snap.version();
                }
            })
        };
        let trimmed = pack::default_pack().without("ptrace-deny");
        for _ in 0..50 {
            handle.reload(&trimmed).unwrap();
        }
        reader.join().unwrap();
    }
}
