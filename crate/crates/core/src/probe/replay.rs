use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ring::{PushOutcome, RingError, RingProducer};
use super::trace::Trace;
use crate::enforcer::{VerdictError, VerdictOutcome, VerdictTable};
use crate::event::RawEvent;
use crate::policy::PolicyHandle;

/// Longest sleep between two events under timestamped pacing.
pub const MAX_PACING_GAP: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    #[default]
    MaxSpeed,
    Timestamped,
}

/// What the simulated syscall returned to the traced process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "errno", rename_all = "snake_case")]
pub enum SyscallReturn {
    Ok,
    Err(i32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ReplayError {
    #[error("consumer terminated before event {at_seq} could be pushed")]
    ConsumerGone { at_seq: u64 },
    #[error("verdict table: {0}")]
    Verdict(String),
}

impl From<VerdictError> for ReplayError {
    fn from(e: VerdictError) -> Self {
        ReplayError::Verdict(e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub events_pushed: u64,
    pub drop_count: u64,
    pub wall_time: Duration,
    /// Returns of syscalls that waited on a verdict, by seq.
    pub returns: BTreeMap<u64, SyscallReturn>,
    pub verdict_timeouts: u64,
    pub aborted: Option<ReplayError>,
}

/// Inline-mode hookup: where verdicts come from and which syscalls wait.
pub struct InlineGate<'a> {
    pub table: &'a VerdictTable,
    pub policy: &'a PolicyHandle,
}

/// Pushes every event of `trace` into the ring in seq order.
///
/// With a gate, each event gets a verdict slot before it is pushed, and
/// events whose syscall has a deny or kill rule in the current policy block
/// until their verdict is settled.
pub fn replay(
    trace: &Trace,
    producer: &RingProducer<RawEvent>,
    pacing: Pacing,
    gate: Option<InlineGate<'_>>,
) -> ReplayReport {
    let start = Instant::now();
    let mut report = ReplayReport::default();
    let mut critical: (u64, BTreeSet<String>) = (0, BTreeSet::new());
    let timeouts_before = gate.as_ref().map_or(0, |g| g.table.timeouts());
    let mut prev_ts: Option<u64> = None;

    for ev in &trace.events {
        if pacing == Pacing::Timestamped {
            if let Some(prev) = prev_ts {
                let gap = Duration::from_nanos(ev.timestamp_ns.saturating_sub(prev)).min(MAX_PACING_GAP);
                if !gap.is_zero() {
                    std::thread::sleep(gap);
                }
            }
            prev_ts = Some(ev.timestamp_ns);
        }

        let mut awaited = false;
        if let Some(g) = &gate {
            let version = g.policy.version();
            if version != critical.0 {
                critical = (version, g.policy.load().critical_syscalls());
            }
            awaited = critical.1.contains(&ev.syscall);
            if let Err(e) = g.table.register(ev.seq, awaited) {
                report.aborted = Some(e.into());
                break;
            }
        }
        match producer.push(ev.clone()) {
            Ok(PushOutcome::Queued) => report.events_pushed += 1,
            Ok(PushOutcome::Dropped) => continue,
            Err(RingError::ConsumerGone) | Err(RingError::NotPowerOfTwo(_)) => {
                report.aborted = Some(ReplayError::ConsumerGone { at_seq: ev.seq });
                break;
            }
        }
        if let (true, Some(g)) = (awaited, &gate) {
            let verdict = g.table.await_verdict(ev.seq);
            let ret = match verdict.outcome {
                VerdictOutcome::Allow => SyscallReturn::Ok,
                VerdictOutcome::Errno(code) => SyscallReturn::Err(code),
            };
            report.returns.insert(ev.seq, ret);
        }
    }

    report.drop_count = producer.drop_count();
    report.verdict_timeouts = gate.as_ref().map_or(0, |g| g.table.timeouts() - timeouts_before);
    report.wall_time = start.elapsed();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{generate_scenario, ring_buffer, BufferMode, ScenarioKind};

    #[test]
    fn observe_with_ample_capacity_drops_nothing() {
        let trace = crate::probe::generate_workload(1000, 1);
        let (tx, rx) = ring_buffer(4096, BufferMode::Observe).unwrap();
        let report = replay(&trace, &tx, Pacing::MaxSpeed, None);
        assert_eq!(report.events_pushed, 1000);
        assert_eq!(report.drop_count, 0);
        drop(tx);
        let seqs: Vec<u64> = std::iter::from_fn(|| rx.pop()).map(|e| e.seq).collect();
        assert_eq!(seqs, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn consumer_gone_aborts_with_partial_report() {
        let trace = generate_scenario(ScenarioKind::BenignBackground, 1);
        let (tx, rx) = ring_buffer(64, BufferMode::Inline).unwrap();
        let consumer = std::thread::spawn(move || {
            for _ in 0..10 {
                rx.pop();
            }
        });
        let report = replay(&trace, &tx, Pacing::MaxSpeed, None);
        consumer.join().unwrap();
        assert!(matches!(report.aborted, Some(ReplayError::ConsumerGone { .. })));
        assert!(report.events_pushed >= 10 && report.events_pushed < trace.len() as u64);
        assert_eq!(report.drop_count, 0);
    }

    #[test]
    fn timestamped_pacing_preserves_order() {
        let mut trace = generate_scenario(ScenarioKind::SensitiveFileRead, 2);
        trace.events.truncate(20);
        trace.labels.retain(|s, _| *s < 20);
        let (tx, rx) = ring_buffer(64, BufferMode::Observe).unwrap();
        let report = replay(&trace, &tx, Pacing::Timestamped, None);
        let span = trace.events.last().unwrap().timestamp_ns - trace.events[0].timestamp_ns;
        assert!(report.wall_time >= Duration::from_nanos(span) / 2);
        drop(tx);
        let seqs: Vec<u64> = std::iter::from_fn(|| rx.pop()).map(|e| e.seq).collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    }
}
