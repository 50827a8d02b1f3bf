//! Simulated probe source: scenario generation, trace files, the event ring
//! buffer and replay into it.

mod replay;
mod ring;
mod scenario;
mod trace;

pub use replay::{replay, InlineGate, Pacing, ReplayError, ReplayReport, SyscallReturn, MAX_PACING_GAP};
pub use ring::{ring_buffer, BufferMode, PushOutcome, RingConsumer, RingError, RingProducer};
pub use scenario::{
    generate_scenario, generate_workload, CGROUP_ALPINE, CGROUP_DB, CGROUP_HOST, CGROUP_WEB, PID_ALPINE_SHELL,
    PID_CRON, PID_NODE, PID_REDIS, PID_SSHD, PID_USER_SHELL,
};
pub use trace::{load_trace, save_trace, ScenarioKind, ScenarioLabel, Trace, TraceError, TRACE_FORMAT_VERSION};
