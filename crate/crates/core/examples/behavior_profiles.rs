//! Learns per-container syscall baselines and reports deviations.

use patrol::analyzer::{process_event, AnalyzerConfig, Granularity, ProfileStore};
use patrol::event::Enricher;
use patrol::policy::{compile, PolicySet};
use patrol::probe::generate_workload;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = generate_workload(20_000, 5);
    let compiled = compile(&PolicySet::new())?;
    for granularity in [Granularity::Container, Granularity::Process] {
        let mut store = ProfileStore::new(AnalyzerConfig {
            granularity,
            ..AnalyzerConfig::default()
        });
        let mut enricher = Enricher::new();
        let mut flags = Vec::new();
        for raw in &trace.events {
            let event = enricher.enrich(raw.clone(), &trace.registry);
            let outcome = process_event(&event, &compiled, &mut store);
            for f in outcome.behavior_flags {
                flags.push((event.seq(), store.key_for(&event), f));
            }
        }
        let learned = store.profiles().filter(|p| p.learned).count();
        println!(
            "{}: {} profiles, {learned} learned, {} flags",
            granularity.as_str(),
            store.len(),
            flags.len()
        );
        if granularity == Granularity::Container {
            for p in store.profiles() {
                println!(
                    "  {:<12} {:>6} events {:?}",
                    p.container_id, p.window_events, p.syscall_counts
                );
            }
        }
        for (seq, key, f) in flags.iter().take(5) {
            println!(
                "  seq {seq} {key}: {} {} (count {}, freq {:.5})",
                f.kind.as_str(),
                f.syscall,
                f.count,
                f.frequency
            );
        }
    }
    Ok(())
}
