//! Generates a scenario trace, writes it to disk and reads it back.
//!
//! cargo run --example generate_trace -- reverse_shell_bash 7

use patrol::probe::{generate_scenario, ScenarioKind, Trace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind: ScenarioKind = args.next().as_deref().unwrap_or("container_escape_fsconfig").parse()?;
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let trace = generate_scenario(kind, seed);
    trace.validate()?;
    let path = std::env::temp_dir().join(format!("{kind}-{seed}.json"));
    trace.write_file(&path)?;
    let back = Trace::read_file(&path)?;
    assert_eq!(back.events, trace.events);

    println!(
        "{kind} seed {seed}: {} events written to {}",
        trace.len(),
        path.display()
    );
    for ev in &trace.events {
        let Some(label) = trace.label(ev.seq) else { continue };
        let marker = if label.signature { "*" } else { " " };
        let detail = match (ev.argv(), ev.path()) {
            (Some(argv), _) => argv.join(" "),
            (None, Some(path)) => path.to_string(),
            (None, None) => String::new(),
        };
        println!(
            "{marker} {:>4} pid {:>5} uid {:>4} {:<8} {:<22} {detail}",
            ev.seq, ev.pid, ev.uid, ev.syscall, label.step
        );
    }
    Ok(())
}
