//! Throughput and per-event decision latency over a synthetic workload,
//! with the shipped pack and with no rules at all.
//!
//! cargo run --release --example bench [events]

use patrol::pipeline::{run_pipeline, PipelineOptions};
use patrol::policy::{pack, PolicyHandle, PolicySet};
use patrol::probe::generate_workload;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let events: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(100_000);
    let trace = generate_workload(events, 1);
    for (name, set) in [("empty", PolicySet::new()), ("default-pack", pack::default_pack())] {
        let handle = PolicyHandle::from_policies(&set)?;
        let out = run_pipeline(&trace, &handle, &PipelineOptions::default())?;
        let t = out.summary.timing;
        println!(
            "{name:<13} {:>9.0} ev/s  mean {:>5.1} us  p50 {:>5.1} us  p99 {:>5.1} us  max {:>7.1} us  awaited {}",
            t.events_per_sec,
            t.mean_ns as f64 / 1e3,
            t.p50_ns as f64 / 1e3,
            t.p99_ns as f64 / 1e3,
            t.max_ns as f64 / 1e3,
            out.replay.returns.len()
        );
    }
    Ok(())
}
