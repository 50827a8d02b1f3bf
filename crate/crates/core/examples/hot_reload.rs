//! Swaps the policy set halfway through a replay and shows where the
//! version tags step.

use patrol::pipeline::{run_pipeline, PipelineOptions};
use patrol::policy::{pack, PolicyHandle};
use patrol::probe::generate_workload;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = generate_workload(10_000, 2);
    let handle = PolicyHandle::from_policies(&pack::default_pack())?;
    let opts = PipelineOptions {
        reload_at: Some((5_000, pack::adjusted_pack())),
        ..PipelineOptions::default()
    };
    let out = run_pipeline(&trace, &handle, &opts)?;

    let mut last = None;
    for tag in &out.tags {
        if let Some(v) = tag.policy_version.filter(|v| Some(*v) != last) {
            println!("seq {:>5}: policy version {v}", tag.seq);
            last = Some(v);
        }
    }
    println!(
        "versions seen: {:?}, handle now at {}",
        out.summary.policy_versions,
        handle.version()
    );
    Ok(())
}
