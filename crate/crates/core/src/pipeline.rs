//! Two-thread pipeline: a replay producer feeding the ring buffer, and one
//! consumer that enriches, analyzes and enforces.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{process_event, AnalyzerConfig, ProfileStore};
use crate::enforcer::{
    ActionTaken, AlertSinks, EnforceError, EnforcementRecord, Enforcer, ExecEntry, FailPolicy, FileSink, KillEntry,
    MemorySink, VerdictTable, DEFAULT_WATCHDOG,
};
use crate::event::{Enricher, RawEvent};
use crate::policy::{CompileError, PolicyHandle, PolicySet, Verdict};
use crate::probe::{replay, ring_buffer, BufferMode, InlineGate, Pacing, ReplayReport, RingError, ScenarioKind, Trace};

pub const DEFAULT_RING_CAPACITY: usize = 8192;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub mode: BufferMode,
    pub ring_capacity: usize,
    pub pacing: Pacing,
    pub watchdog: Duration,
    pub fail_policy: FailPolicy,
    pub analyzer: AnalyzerConfig,
    /// Swap in this policy set just before the consumer handles `seq`.
    pub reload_at: Option<(u64, PolicySet)>,
    /// Hold the consumer until the producer has pushed everything.
    /// Observe mode only.
    pub pause_consumer: bool,
    pub sink_path: Option<PathBuf>,
    pub memory_sink: Option<MemorySink>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            mode: BufferMode::Inline,
            ring_capacity: DEFAULT_RING_CAPACITY,
            pacing: Pacing::MaxSpeed,
            watchdog: DEFAULT_WATCHDOG,
            fail_policy: FailPolicy::Closed,
            analyzer: AnalyzerConfig::default(),
            reload_at: None,
            pause_consumer: false,
            sink_path: None,
            memory_sink: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("cannot pause the consumer in inline mode")]
    PausedInline,
    #[error("opening alert sink: {0}")]
    Sink(#[source] std::io::Error),
    #[error("policy reload failed: {0}")]
    Reload(#[from] CompileError),
    #[error("pipeline aborted: {0}")]
    Enforce(#[from] EnforceError),
    #[error("consumer thread panicked")]
    ConsumerPanicked,
}

/// Per-event trail left by the consumer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTag {
    pub seq: u64,
    pub pid: u32,
    /// Version of the policy set the decision came from; `None` when the
    /// event was suppressed before matching.
    pub policy_version: Option<u64>,
    pub verdict: Option<Verdict>,
    pub rule_name: Option<String>,
    pub flags: u32,
}

impl EventTag {
    pub fn suppressed(&self) -> bool {
        self.verdict.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub allow: u64,
    pub deny: u64,
    pub kill: u64,
    pub alert: u64,
    pub log: u64,
    /// Events from processes already stopped by enforcement.
    pub suppressed: u64,
}

impl DecisionCounts {
    pub fn total(&self) -> u64 {
        self.allow + self.deny + self.kill + self.alert + self.log + self.suppressed
    }

    fn add(&mut self, verdict: Option<Verdict>) {
        match verdict {
            Some(Verdict::Allow) => self.allow += 1,
            Some(Verdict::Deny) => self.deny += 1,
            Some(Verdict::Kill) => self.kill += 1,
            Some(Verdict::Alert) => self.alert += 1,
            Some(Verdict::Log) => self.log += 1,
            None => self.suppressed += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ns: u64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
    pub latency_sum_ns: u64,
    pub consumer_busy_ns: u64,
    pub wall_ns: u64,
    pub events_per_sec: f64,
}

impl TimingStats {
    /// Nearest-rank percentiles over `latencies`.
    pub fn from_latencies(latencies: &[u64], consumer_busy: Duration, wall: Duration, events: u64) -> Self {
        let mut sorted = latencies.to_vec();
        sorted.sort_unstable();
        let pct = |p: f64| -> u64 {
            if sorted.is_empty() {
                return 0;
            }
            let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
            sorted[rank - 1]
        };
        let sum: u64 = sorted.iter().sum();
        TimingStats {
            mean_ns: if sorted.is_empty() {
                0
            } else {
                sum / sorted.len() as u64
            },
            p50_ns: pct(0.50),
            p99_ns: pct(0.99),
            max_ns: sorted.last().copied().unwrap_or(0),
            latency_sum_ns: sum,
            consumer_busy_ns: consumer_busy.as_nanos() as u64,
            wall_ns: wall.as_nanos() as u64,
            events_per_sec: if wall.is_zero() {
                0.0
            } else {
                events as f64 / wall.as_secs_f64()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: ScenarioKind,
    pub attack_events: u64,
    pub detected: bool,
    pub prevented: bool,
    /// Non-allow decisions on this scenario's non-attack labeled events.
    pub false_positives: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: BufferMode,
    pub trace_len: u64,
    pub events_processed: u64,
    pub drop_count: u64,
    pub decisions: DecisionCounts,
    pub alerts_emitted: u64,
    pub behavior_flags: u64,
    pub enrichment_warnings: u64,
    pub errno_returns: u64,
    pub kills: u64,
    pub verdict_timeouts: u64,
    pub policy_versions: Vec<u64>,
    /// Non-allow decisions on events not labeled as attack steps.
    pub false_positives: u64,
    pub false_positive_rules: BTreeMap<String, u64>,
    pub scenarios: Vec<ScenarioOutcome>,
    pub timing: TimingStats,
}

impl RunSummary {
    /// The summary with every wall-clock derived field zeroed.
    pub fn without_timing(&self) -> RunSummary {
        RunSummary {
            timing: TimingStats::default(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub replay: ReplayReport,
    pub tags: Vec<EventTag>,
    pub records: Vec<EnforcementRecord>,
    pub profiles: ProfileStore,
    pub kill_log: Vec<KillEntry>,
    pub exec_log: Vec<ExecEntry>,
}

struct ConsumerOutput {
    tags: Vec<EventTag>,
    records: Vec<EnforcementRecord>,
    profiles: ProfileStore,
    kill_log: Vec<KillEntry>,
    exec_log: Vec<ExecEntry>,
    alerts: u64,
    warnings: u64,
    busy: Duration,
}

/// Runs `trace` through the full pipeline against the policy in `handle`.
pub fn run_pipeline(trace: &Trace, handle: &PolicyHandle, opts: &PipelineOptions) -> Result<RunOutput, PipelineError> {
    if opts.pause_consumer && opts.mode == BufferMode::Inline {
        return Err(PipelineError::PausedInline);
    }
    let mut sinks = AlertSinks::new();
    if let Some(path) = &opts.sink_path {
        sinks.push(Box::new(FileSink::create(path).map_err(PipelineError::Sink)?));
    }
    if let Some(mem) = &opts.memory_sink {
        sinks.push(Box::new(mem.clone()));
    }
    let table = Arc::new(VerdictTable::new(opts.watchdog, opts.fail_policy));
    let (producer, consumer) = ring_buffer::<RawEvent>(opts.ring_capacity, opts.mode)?;
    let (go_tx, go_rx) = crossbeam_channel::bounded::<()>(1);

    let start = Instant::now();
    let (report, consumed) = std::thread::scope(|s| {
        let worker = {
            let table = Arc::clone(&table);
            let registry = &trace.registry;
            std::thread::Builder::new()
                .name("patrol-consumer".into())
                .spawn_scoped(s, move || -> Result<ConsumerOutput, PipelineError> {
                    if opts.pause_consumer {
                        let _ = go_rx.recv();
                    }
                    let mut enforcer = Enforcer::new(opts.mode, table, sinks);
                    let mut enricher = Enricher::new();
                    let mut profiles = ProfileStore::new(opts.analyzer);
                    let mut reload = opts.reload_at.as_ref();
                    let mut tags = Vec::with_capacity(trace.len());
                    let mut records = Vec::with_capacity(trace.len());
                    let mut busy = Duration::ZERO;
                    while let Some(raw) = consumer.pop() {
                        let popped = Instant::now();
                        if let Some((at, set)) = reload {
                            if raw.seq >= *at {
                                handle.reload(set)?;
                                reload = None;
                            }
                        }
                        let event = enricher.enrich(raw, registry);
                        if enforcer.screen(&event)? {
                            tags.push(EventTag {
                                seq: event.seq(),
                                pid: event.raw.pid,
                                policy_version: None,
                                verdict: None,
                                rule_name: None,
                                flags: 0,
                            });
                            busy += popped.elapsed();
                            continue;
                        }
                        let compiled = handle.load();
                        let outcome = process_event(&event, &compiled, &mut profiles);
                        let record = enforcer.apply(&outcome.decision, &event, popped)?;
                        enforcer.alert_flags(&event, &outcome.behavior_flags)?;
                        tags.push(EventTag {
                            seq: event.seq(),
                            pid: event.raw.pid,
                            policy_version: Some(outcome.policy_version),
                            verdict: Some(outcome.decision.verdict),
                            rule_name: outcome.decision.rule_name,
                            flags: outcome.behavior_flags.len() as u32,
                        });
                        records.push(record);
                        busy += popped.elapsed();
                    }
                    enforcer.flush().map_err(EnforceError::from)?;
                    Ok(ConsumerOutput {
                        tags,
                        records,
                        profiles,
                        kill_log: enforcer.procs().kill_log().to_vec(),
                        exec_log: enforcer.procs().exec_log().to_vec(),
                        alerts: enforcer.alerts_emitted(),
                        warnings: enricher.warnings(),
                        busy,
                    })
                })
                .expect("spawn consumer")
        };
        let gate = (opts.mode == BufferMode::Inline).then(|| InlineGate {
            table: &table,
            policy: handle,
        });
        let report = replay(trace, &producer, opts.pacing, gate);
        drop(producer);
        let _ = go_tx.send(());
        let consumed = worker.join().map_err(|_| PipelineError::ConsumerPanicked);
        (report, consumed)
    });
    let wall = start.elapsed();
    let out = consumed??;

    let summary = summarize(trace, opts.mode, &report, &out, wall);
    Ok(RunOutput {
        summary,
        replay: report,
        tags: out.tags,
        records: out.records,
        profiles: out.profiles,
        kill_log: out.kill_log,
        exec_log: out.exec_log,
    })
}

fn summarize(
    trace: &Trace,
    mode: BufferMode,
    report: &ReplayReport,
    out: &ConsumerOutput,
    wall: Duration,
) -> RunSummary {
    let mut decisions = DecisionCounts::default();
    let mut versions: Vec<u64> = Vec::new();
    let mut flags = 0u64;
    let mut false_positives = 0u64;
    let mut fp_rules: BTreeMap<String, u64> = BTreeMap::new();
    let mut per_scenario: BTreeMap<ScenarioKind, ScenarioOutcome> = BTreeMap::new();
    for label in trace.labels.values() {
        let entry = per_scenario.entry(label.scenario).or_insert(ScenarioOutcome {
            scenario: label.scenario,
            attack_events: 0,
            detected: false,
            prevented: false,
            false_positives: 0,
        });
        if label.attack {
            entry.attack_events += 1;
        }
    }

    for tag in &out.tags {
        decisions.add(tag.verdict);
        flags += tag.flags as u64;
        if let Some(v) = tag.policy_version {
            if versions.last() != Some(&v) {
                versions.push(v);
            }
        }
        let flagged = tag.verdict.is_some_and(|v| v != Verdict::Allow);
        let label = trace.label(tag.seq);
        let is_attack = label.is_some_and(|l| l.attack);
        if flagged && !is_attack {
            false_positives += 1;
            if let Some(rule) = &tag.rule_name {
                *fp_rules.entry(rule.clone()).or_default() += 1;
            }
        }
        if let Some(label) = label {
            let entry = per_scenario.get_mut(&label.scenario).expect("seeded above");
            if label.attack {
                entry.detected |= flagged || tag.flags > 0;
                entry.prevented |=
                    mode == BufferMode::Inline && matches!(tag.verdict, Some(Verdict::Deny | Verdict::Kill));
            } else if flagged {
                entry.false_positives += 1;
            }
        }
    }

    let latencies: Vec<u64> = out.records.iter().map(|r| r.latency_ns).collect();
    let events_processed = out.tags.len() as u64;
    RunSummary {
        mode,
        trace_len: trace.len() as u64,
        events_processed,
        drop_count: report.drop_count,
        decisions,
        alerts_emitted: out.alerts,
        behavior_flags: flags,
        enrichment_warnings: out.warnings,
        errno_returns: report
            .returns
            .values()
            .filter(|r| matches!(r, crate::probe::SyscallReturn::Err(_)))
            .count() as u64,
        kills: out
            .records
            .iter()
            .filter(|r| r.action_taken == ActionTaken::Killed && r.enforced)
            .count() as u64,
        verdict_timeouts: report.verdict_timeouts,
        policy_versions: versions,
        false_positives,
        false_positive_rules: fp_rules,
        scenarios: per_scenario.into_values().collect(),
        timing: TimingStats::from_latencies(&latencies, out.busy, wall, events_processed),
    }
}
