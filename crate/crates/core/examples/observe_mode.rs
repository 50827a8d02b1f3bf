//! Observe versus inline on the same trace, and ring-buffer drops when the
//! consumer stalls in observe mode.

use patrol::enforcer::MemorySink;
use patrol::pipeline::{run_pipeline, PipelineOptions};
use patrol::policy::{pack, PolicyHandle};
use patrol::probe::{generate_scenario, generate_workload, BufferMode, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = generate_scenario(ScenarioKind::ReverseShellNc, 1);
    for mode in [BufferMode::Observe, BufferMode::Inline] {
        let sink = MemorySink::new();
        let opts = PipelineOptions {
            mode,
            memory_sink: Some(sink.clone()),
            ..PipelineOptions::default()
        };
        let handle = PolicyHandle::from_policies(&pack::default_pack())?;
        let out = run_pipeline(&trace, &handle, &opts)?;
        println!(
            "{}: errno returns {}, suppressed {}",
            mode.as_str(),
            out.summary.errno_returns,
            out.summary.decisions.suppressed
        );
        for alert in sink.records() {
            println!("  {} {} {} {}", alert.seq, alert.action, alert.rule, alert.argv_summary);
        }
    }

    let burst = generate_workload(1_000, 3);
    let opts = PipelineOptions {
        mode: BufferMode::Observe,
        ring_capacity: 256,
        pause_consumer: true,
        ..PipelineOptions::default()
    };
    let out = run_pipeline(&burst, &PolicyHandle::from_policies(&pack::default_pack())?, &opts)?;
    println!(
        "stalled consumer, capacity 256: pushed {} + dropped {} = {}",
        out.replay.events_pushed,
        out.replay.drop_count,
        burst.len()
    );
    Ok(())
}
