use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, MutexGuard};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Permission denied. The single errno used for every denial.
pub const EACCES: i32 = 13;
/// No such process. Returned for syscalls of a process the engine has
/// already terminated or whose exec was refused.
pub const ESRCH: i32 = 3;

pub const DEFAULT_WATCHDOG: Duration = Duration::from_millis(100);

/// Yields tried before parking on the condvar.
const SPIN_YIELDS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "code", rename_all = "snake_case")]
pub enum VerdictOutcome {
    Allow,
    Errno(i32),
}

impl fmt::Display for VerdictOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictOutcome::Allow => f.write_str("allow"),
            VerdictOutcome::Errno(code) => write!(f, "errno({code})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub event_seq: u64,
    pub outcome: VerdictOutcome,
    pub rule_name: Option<String>,
}

impl Verdict {
    pub fn allow(event_seq: u64) -> Self {
        Verdict {
            event_seq,
            outcome: VerdictOutcome::Allow,
            rule_name: None,
        }
    }

    pub fn errno(event_seq: u64, code: i32, rule_name: Option<String>) -> Self {
        Verdict {
            event_seq,
            outcome: VerdictOutcome::Errno(code),
            rule_name,
        }
    }
}

/// What an awaiting syscall gets when the watchdog expires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailPolicy {
    Open,
    #[default]
    Closed,
}

impl FailPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            FailPolicy::Open => "open",
            FailPolicy::Closed => "closed",
        }
    }
}

impl std::str::FromStr for FailPolicy {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "open" => Ok(FailPolicy::Open),
            "closed" => Ok(FailPolicy::Closed),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerdictError {
    #[error("verdict for event {seq} settled twice")]
    DoubleSettle { seq: u64 },
    #[error("event {seq} has no verdict slot")]
    UnsettledSlotMissing { seq: u64 },
    #[error("verdict slot for event {seq} registered twice")]
    DuplicateSlot { seq: u64 },
}

#[derive(Debug)]
enum Slot {
    Pending { awaited: bool },
    Settled(Verdict),
    TimedOut,
}

#[derive(Debug, Default)]
struct Inner {
    slots: HashMap<u64, Slot>,
    high_water: Option<u64>,
    settled: u64,
    timeouts: u64,
    late_settles: u64,
}

/// Shared verdict slots between the producer (which awaits) and the
/// consumer (which settles).
#[derive(Debug)]
pub struct VerdictTable {
    inner: Mutex<Inner>,
    ready: Condvar,
    watchdog: Duration,
    fail_policy: FailPolicy,
}

impl Default for VerdictTable {
    fn default() -> Self {
        VerdictTable::new(DEFAULT_WATCHDOG, FailPolicy::Closed)
    }
}

impl VerdictTable {
    pub fn new(watchdog: Duration, fail_policy: FailPolicy) -> Self {
        VerdictTable {
            inner: Mutex::new(Inner::default()),
            ready: Condvar::new(),
            watchdog,
            fail_policy,
        }
    }

    pub fn watchdog(&self) -> Duration {
        self.watchdog
    }

    pub fn fail_policy(&self) -> FailPolicy {
        self.fail_policy
    }

    /// Opens a slot for `seq`. Must happen before the event is pushed.
    /// Only slots registered with `awaited` may be passed to [`Self::await_verdict`].
    pub fn register(&self, seq: u64, awaited: bool) -> Result<(), VerdictError> {
        let mut inner = self.inner.lock();
        if inner.slots.contains_key(&seq) || inner.high_water.is_some_and(|h| seq <= h) {
            return Err(VerdictError::DuplicateSlot { seq });
        }
        inner.slots.insert(seq, Slot::Pending { awaited });
        Ok(())
    }

    pub fn has_slot(&self, seq: u64) -> bool {
        matches!(self.inner.lock().slots.get(&seq), Some(Slot::Pending { .. }))
    }

    pub fn settle(&self, verdict: Verdict) -> Result<(), VerdictError> {
        let seq = verdict.event_seq;
        let mut inner = self.inner.lock();
        let slot = inner.slots.remove(&seq);
        match slot {
            Some(Slot::Pending { awaited: true }) => {
                inner.slots.insert(seq, Slot::Settled(verdict));
                self.ready.notify_all();
            }
            Some(Slot::Pending { awaited: false }) => {}
            Some(Slot::TimedOut) => inner.late_settles += 1,
            Some(settled @ Slot::Settled(_)) => {
                inner.slots.insert(seq, settled);
                return Err(VerdictError::DoubleSettle { seq });
            }
            None if inner.high_water.is_some_and(|h| seq <= h) => {
                return Err(VerdictError::DoubleSettle { seq });
            }
            None => return Err(VerdictError::UnsettledSlotMissing { seq }),
        }
        inner.settled += 1;
        inner.high_water = Some(inner.high_water.map_or(seq, |h| h.max(seq)));
        Ok(())
    }

    /// Blocks until `seq` is settled or the watchdog expires; on expiry the
    /// fail policy decides and the timeout is counted.
    pub fn await_verdict(&self, seq: u64) -> Verdict {
        let deadline = Instant::now() + self.watchdog;
        let mut inner = self.inner.lock();
        let mut yields = 0;
        loop {
            match inner.slots.get(&seq) {
                Some(Slot::Settled(_)) => {
                    let Some(Slot::Settled(v)) = inner.slots.remove(&seq) else {
                        unreachable!()
                    };
                    return v;
                }
                Some(Slot::Pending { .. }) => {}
                Some(Slot::TimedOut) | None => return self.fail_verdict(seq),
            }
            // The consumer usually settles within a scheduling quantum.
            if yields < SPIN_YIELDS {
                yields += 1;
                MutexGuard::unlocked(&mut inner, std::thread::yield_now);
                continue;
            }
            if self.ready.wait_until(&mut inner, deadline).timed_out() {
                if let Some(Slot::Settled(_)) = inner.slots.get(&seq) {
                    continue;
                }
                inner.slots.insert(seq, Slot::TimedOut);
                inner.timeouts += 1;
                return self.fail_verdict(seq);
            }
        }
    }

    fn fail_verdict(&self, seq: u64) -> Verdict {
        match self.fail_policy {
            FailPolicy::Open => Verdict::allow(seq),
            FailPolicy::Closed => Verdict::errno(seq, EACCES, None),
        }
    }

    pub fn settled_count(&self) -> u64 {
        self.inner.lock().settled
    }

    pub fn timeouts(&self) -> u64 {
        self.inner.lock().timeouts
    }

    pub fn late_settles(&self) -> u64 {
        self.inner.lock().late_settles
    }

    /// Slots registered but not yet settled.
    pub fn pending(&self) -> usize {
        self.inner
            .lock()
            .slots
            .values()
            .filter(|s| matches!(s, Slot::Pending { .. }))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn settle_then_await() {
        let t = VerdictTable::default();
        t.register(5, true).unwrap();
        t.settle(Verdict::allow(5)).unwrap();
        assert_eq!(t.await_verdict(5), Verdict::allow(5));
        assert_eq!(t.settled_count(), 1);
    }

    #[test]
    fn double_settle_is_loud() {
        let t = VerdictTable::default();
        t.register(1, false).unwrap();
        t.settle(Verdict::allow(1)).unwrap();
        assert_eq!(t.settle(Verdict::allow(1)), Err(VerdictError::DoubleSettle { seq: 1 }));

        t.register(2, true).unwrap();
        t.settle(Verdict::allow(2)).unwrap();
        assert_eq!(t.settle(Verdict::allow(2)), Err(VerdictError::DoubleSettle { seq: 2 }));
    }

    #[test]
    fn missing_slot() {
        let t = VerdictTable::default();
        assert_eq!(
            t.settle(Verdict::allow(9)),
            Err(VerdictError::UnsettledSlotMissing { seq: 9 })
        );
    }

    #[test]
    fn watchdog_fail_closed_fires_once() {
        let t = VerdictTable::new(Duration::from_millis(20), FailPolicy::Closed);
        t.register(3, true).unwrap();
        let start = Instant::now();
        let v = t.await_verdict(3);
        assert!(start.elapsed() >= Duration::from_millis(20));
        assert_eq!(v.outcome, VerdictOutcome::Errno(EACCES));
        assert_eq!(t.timeouts(), 1);
        // The stalled consumer eventually settles; counted as late, not an error.
        t.settle(Verdict::allow(3)).unwrap();
        assert_eq!(t.late_settles(), 1);
        assert_eq!(t.timeouts(), 1);
    }

    #[test]
    fn watchdog_fail_open() {
        let t = VerdictTable::new(Duration::from_millis(5), FailPolicy::Open);
        t.register(0, true).unwrap();
        assert_eq!(t.await_verdict(0).outcome, VerdictOutcome::Allow);
    }

    #[test]
    fn await_settle_race_stress() {
        let t = Arc::new(VerdictTable::new(Duration::from_secs(10), FailPolicy::Closed));
        let n = 10_000u64;
        let (tx, rx) = crossbeam_channel::bounded::<u64>(16);
        let settler = {
            let t = Arc::clone(&t);
            thread::spawn(move || {
                for seq in rx {
                    let v = if seq % 3 == 0 {
                        Verdict::errno(seq, EACCES, Some("r".into()))
                    } else {
                        Verdict::allow(seq)
                    };
                    t.settle(v).unwrap();
                }
            })
        };
        for seq in 0..n {
            t.register(seq, true).unwrap();
            tx.send(seq).unwrap();
            let v = t.await_verdict(seq);
            assert_eq!(v.event_seq, seq);
            let expected = if seq % 3 == 0 {
                VerdictOutcome::Errno(EACCES)
            } else {
                VerdictOutcome::Allow
            };
            assert_eq!(v.outcome, expected);
        }
        drop(tx);
        settler.join().unwrap();
        assert_eq!(t.timeouts(), 0);
        assert_eq!(t.settled_count(), n);
        assert_eq!(t.pending(), 0);
    }
}
